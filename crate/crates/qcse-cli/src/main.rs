//! `qcse` — batch pipeline for whispered/normal speech classification
//! experiments: synthesize a corpus, corrupt it with calibrated noise,
//! extract quartered (chirp) spectral envelopes, train the 1D-CNN, and
//! score it.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "qcse", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override file values, file values
    /// override defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every random quantity in a run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus of normal/whispered items.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Training utterances per class.
        #[arg(long)]
        train: usize,
        /// Test utterances per class.
        #[arg(long)]
        test: usize,
        /// Output directory (WAVs plus manifest.csv).
        #[arg(long)]
        out: PathBuf,
        /// Utterance duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Extract normalized envelope features for every manifest entry.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Corpus manifest (path,label,split CSV).
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for .qcse feature files.
        #[arg(long)]
        out: PathBuf,
        /// Spectrum-estimation radius; 1.0 selects the plain envelope.
        #[arg(long)]
        radius: Option<f64>,
        /// Corrupt each waveform at this SNR before extraction.
        #[arg(long)]
        snr_db: Option<f64>,
        /// First-difference pre-emphasis coefficient (off by default).
        #[arg(long)]
        pre_emphasis: Option<f64>,
        /// Subtract the mean amplitude before framing.
        #[arg(long)]
        remove_dc: bool,
    },
    /// Add calibrated white Gaussian noise to WAV files.
    Corrupt {
        #[command(flatten)]
        common: Common,
        /// A WAV file or a directory of WAV files.
        #[arg(long)]
        input: PathBuf,
        /// Requested signal-to-noise ratio in dB.
        #[arg(long)]
        snr_db: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier on extracted features.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory produced by `extract`.
        #[arg(long)]
        features: PathBuf,
        /// Output directory (checkpoints plus training log).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        /// adaptive_moment | sgd_momentum
        #[arg(long)]
        optimizer: Option<String>,
        /// valid | same
        #[arg(long)]
        padding: Option<String>,
    },
    /// Score trained checkpoints on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Directory produced by `train` (or a single .qcm file).
        #[arg(long)]
        model: PathBuf,
        /// Output directory (report.txt and report.csv).
        #[arg(long)]
        out: PathBuf,
        /// SNR tag recorded in the report metadata.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Dataset tag recorded in the report metadata.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Dump the plain and chirp quartered envelopes of one WAV as CSV.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Input WAV file.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Chirp radius to compare against the plain envelope.
        #[arg(long)]
        radius: Option<f64>,
        /// Also include envelopes after corruption at this SNR.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Also dump the complex chirp spectrum of the first frame
        /// (columns bin,real,imag,magnitude_db) to this path.
        #[arg(long)]
        spectrum_csv: Option<PathBuf>,
        /// Compute the spectrum dump by direct summation instead of the
        /// FFT path.
        #[arg(long, requires = "spectrum_csv")]
        oracle: bool,
    },
}

/// Worker-pool size: the `QCSE_WORKERS` environment variable, or every
/// available core.
fn worker_count() -> usize {
    std::env::var("QCSE_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn main() {
    let cli = Cli::parse();
    let workers = worker_count();
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .ok();

    let outcome = match cli.command {
        Command::Synth {
            common,
            train,
            test,
            out,
            duration,
        } => commands::synth::run(&common, train, test, &out, duration),
        Command::Extract {
            common,
            manifest,
            out,
            radius,
            snr_db,
            pre_emphasis,
            remove_dc,
        } => commands::extract::run(
            &common,
            &manifest,
            &out,
            radius,
            snr_db,
            pre_emphasis,
            remove_dc,
        ),
        Command::Corrupt {
            common,
            input,
            snr_db,
            out,
        } => commands::corrupt::run(&common, &input, snr_db, &out),
        Command::Train {
            common,
            manifest,
            features,
            out,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            optimizer,
            padding,
        } => commands::train::run(
            &common,
            &manifest,
            &features,
            &out,
            commands::train::Overrides {
                learning_rate,
                batch_size,
                max_epochs,
                patience,
                optimizer,
                padding,
            },
            workers,
        ),
        Command::Eval {
            common,
            manifest,
            features,
            model,
            out,
            snr_db,
            tag,
        } => commands::eval::run(&common, &manifest, &features, &model, &out, snr_db, tag),
        Command::Inspect {
            common,
            input,
            out,
            radius,
            snr_db,
            spectrum_csv,
            oracle,
        } => commands::inspect::run(
            &common,
            &input,
            &out,
            radius,
            snr_db,
            spectrum_csv.as_deref(),
            oracle,
        ),
    };

    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
