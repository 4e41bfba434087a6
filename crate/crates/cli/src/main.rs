//! `specshape`: datasets, spectra, training, evaluation and every
//! application of a trained model from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure. Errors are printed to stderr as one JSON object.

mod commands;
mod config;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use specshape::eigensolve::FemOrder;
use specshape::geometry::FamilyKind;

use config::ModelKind;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "specshape", version, about = "Shapes from Laplacian spectra and back")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic shape family and write shapes, manifest and spectra.
    GenData(GenDataArgs),
    /// Laplace-Beltrami spectrum of one shape file.
    Spectrum(SpectrumArgs),
    /// Train a model from a run configuration.
    Train(TrainArgs),
    /// Evaluation tables.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Decode a spectrum into a shape.
    Reconstruct(ReconstructArgs),
    /// Recover a template-resolution shape from a coarse mesh.
    Superres(SuperresArgs),
    /// Shape with the pose of one shape and the spectrum of another.
    StyleTransfer(StyleTransferArgs),
    /// Interpolate between two spectra, or bilinearly between four latents.
    Interpolate(InterpolateArgs),
    /// Scale a band of eigenvalues and decode the result.
    Band(BandArgs),
    /// Spectrum of a point cloud with a point-set model.
    EstimateSpectrum(EstimateArgs),
    /// Dense correspondence between two shapes through the decoder.
    Match(MatchArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Family {
    /// Deformed icospheres.
    Blob3d,
    /// Closed planar curves.
    Contour2d,
}

impl From<Family> for FamilyKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Blob3d => FamilyKind::Blob3d,
            Family::Contour2d => FamilyKind::Contour2d,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "snake_case")]
enum Order {
    Linear,
    #[default]
    Cubic,
}

impl From<Order> for FemOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::Linear => FemOrder::Linear,
            Order::Cubic => FemOrder::Cubic,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value = "blob3d")]
    family: Family,
    /// Shapes to draw.
    #[arg(long, default_value_t = 700)]
    count: usize,
    /// Leading shapes forming the training split [default: count minus one seventh].
    #[arg(long)]
    n_train: Option<usize>,
    /// Subdivision level for blobs, point count for contours [default: 3 or 64].
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Eigenvalues per shape; 0 skips the spectra.
    #[arg(long, default_value_t = 60)]
    k: usize,
    #[arg(long, value_enum, default_value = "cubic")]
    order: Order,
    /// Spectrum cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    /// Mesh (.off, .obj) or contour (.json).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// FEM order for meshes; contours always use linear elements.
    #[arg(long, value_enum, default_value = "cubic")]
    order: Order,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Spectrum JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Run configuration (.toml or .json); desk-scale defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the checkpoint, log and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Weight of the spectral coupling term [published default: 1e-4].
    #[arg(long)]
    alpha: Option<f64>,
    /// Eigenvalues per spectrum [published default: 30].
    #[arg(long)]
    k: Option<usize>,
    /// Mini-batch size [published default: 16].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [published default: 1e-4; desk-scale runs use 1e-3].
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Weight initialisation and shuffling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Shape-from-spectrum error of the model, the model without the
    /// latent-to-spectrum term, and the nearest training spectrum.
    Table1(Table1Args),
}

#[derive(Args, Debug, Serialize)]
struct Table1Args {
    /// Full model.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Model trained without the latent-to-spectrum term.
    #[arg(long)]
    ablation: PathBuf,
    /// Dataset directory from `gen-data` (its held-out split is evaluated).
    #[arg(long)]
    testset: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSON array of k eigenvalues, or a spectrum object.
    #[arg(long)]
    spectrum: PathBuf,
    /// Shape file; the extension picks the format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SuperresArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Low-resolution mesh.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "cubic")]
    order: Order,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StyleTransferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Spectrum to match.
    #[arg(long)]
    style: PathBuf,
    /// Shape whose pose is kept.
    #[arg(long)]
    pose: PathBuf,
    /// Pull towards the pose latent.
    #[arg(long, default_value_t = 1e-2)]
    w: f64,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Consecutive objective increases tolerated before giving up.
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long)]
    out: PathBuf,
    /// Alignment curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct InterpolateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Two spectra (interpolated in spectrum space) or four grid corners
    /// c00 c10 c01 c11 (blended in latent space).
    #[arg(long, num_args = 2..=4, required = true)]
    spectra: Vec<PathBuf>,
    /// Samples per axis.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Extension of the written shapes [default: off for meshes, json for
    /// contours, xyz for point outputs].
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct BandArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    spectrum: PathBuf,
    /// First index of the band.
    #[arg(long)]
    lo: usize,
    /// Last index of the band, inclusive.
    #[arg(long)]
    hi: usize,
    #[arg(long)]
    factor: f64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the edited spectrum.
    #[arg(long)]
    spectrum_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    /// Point-set model.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Point cloud (.xyz, .obj) or mesh whose vertices are used.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MatchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Source shape.
    #[arg(long)]
    a: PathBuf,
    /// Target shape.
    #[arg(long)]
    b: PathBuf,
    /// Spectrum of `a`; computed when absent.
    #[arg(long)]
    spec_a: Option<PathBuf>,
    #[arg(long)]
    spec_b: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cubic")]
    order: Order,
    /// JSON array of per-vertex labels of `b`, carried over to `a`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ServeArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory for sample browsing and style transfer poses.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(EvalCommand::Table1(a)) => commands::table1(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Superres(a) => commands::superres(&a),
        Command::StyleTransfer(a) => commands::style(&a),
        Command::Interpolate(a) => commands::interpolate(&a),
        Command::Band(a) => commands::band(&a),
        Command::EstimateSpectrum(a) => commands::estimate(&a),
        Command::Match(a) => commands::matching(&a),
        Command::Serve(a) => commands::serve(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
