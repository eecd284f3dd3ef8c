use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pyrcodec::codec::{self, ContextSpec, EncodeConfig, ModelMode};
use pyrcodec::container::{decode_container, encode_container};
use pyrcodec::postprocess::{despeckle, DespeckleConfig, ForestConfig};
use pyrcodec::ppm::{read_image, write_image};
use pyrcodec::pyramid::{auto_levels, build_pyramid, invert_pyramid, level_shapes};
use pyrcodec::scan::critical_path;
use pyrcodec::stats::{
    csv_provenance, entropy_profile_csv, mi_curve_csv, mutual_information_curve,
    pyramid_components, pyramid_entropy_profile,
};
use pyrcodec::{Error, Image};

/// Lossless Paired Pyramid image coding and image statistics.
/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "pyrcodec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an image into its pyramid container.
    Decompose {
        input: PathBuf,
        output: PathBuf,
        /// Number of levels, or "auto" for a 4x4 coarsest grid.
        #[arg(long, default_value = "auto")]
        levels: Levels,
    },
    /// Rebuild the image stored in a pyramid container.
    Reconstruct { input: PathBuf, output: PathBuf },
    /// Compress an image.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        opts: EncodeOpts,
    },
    /// Decompress a stream written by `encode`.
    Decode { input: PathBuf, output: PathBuf },
    /// Entropy profile and mutual-information curves of an image directory.
    Stats {
        dir: PathBuf,
        /// Directory for the CSV files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        max_distance: usize,
        #[arg(long, default_value = "auto")]
        levels: Levels,
        /// Also write horizontal and vertical MI rows.
        #[arg(long)]
        per_axis: bool,
    },
    /// Sequential steps of coarse-to-fine generation.
    CriticalPath {
        #[arg(long)]
        n0: u64,
        #[arg(long, default_value_t = 4)]
        coarsest: u64,
        /// One value for every level or one per level.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        n_squeeze: Vec<u32>,
    },
    /// Replace isolated outlier pixels by their neighbourhood median.
    Despeckle {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 7)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 256)]
        subsample: usize,
        #[arg(long, default_value_t = 0.002)]
        contamination: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Odd window for a local-contrast feature; 0 disables it.
        #[arg(long, default_value_t = 0)]
        neighborhood: usize,
    },
}

#[derive(Clone, Copy, Debug)]
enum Levels {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for Levels {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Levels::Auto);
        }
        s.parse()
            .map(Levels::Fixed)
            .map_err(|_| format!("expected a level count or \"auto\", got {s:?}"))
    }
}

impl Levels {
    fn resolve(self, img: &Image) -> usize {
        match self {
            Levels::Auto => auto_levels(img.height(), img.width()),
            Levels::Fixed(l) => l,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Adaptive,
    Static,
}

#[derive(Args)]
struct EncodeOpts {
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
    #[arg(long, default_value = "auto")]
    levels: Levels,
    /// Squeezes per level: one value or a comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    n_squeeze: Vec<u32>,
    /// Logistic components per static-mode distribution.
    #[arg(long, default_value_t = codec::DEFAULT_MIXTURES)]
    mixtures: usize,
    /// Do not offset differences by half the sample range.
    #[arg(long)]
    no_shift: bool,
    /// Code raw subsampled pixels instead of modulo differences.
    #[arg(long)]
    no_modulo: bool,
    #[arg(long, default_value_t = 16)]
    coarse_bins: u8,
    #[arg(long, default_value_t = 16)]
    neighbor_bins: u8,
    /// Seed of the static-mode fitting restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decode the result before writing it.
    #[arg(long)]
    verify: bool,
}

impl EncodeOpts {
    fn config(&self, img: &Image) -> EncodeConfig {
        EncodeConfig {
            levels: Some(self.levels.resolve(img)),
            n_squeeze: self.n_squeeze.clone(),
            mode: match self.mode {
                Mode::Adaptive => ModelMode::Adaptive,
                Mode::Static => ModelMode::Static,
            },
            mixtures: self.mixtures,
            shift: !self.no_shift,
            no_modulo: self.no_modulo,
            contexts: ContextSpec {
                coarse_bins: self.coarse_bins,
                neighbor_bins: self.neighbor_bins,
            },
            verify: self.verify,
            seed: self.seed,
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_input(path: &Path) -> Result<Image> {
    read_image(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_decompose(input: &Path, output: &Path, levels: Levels) -> Result<()> {
    let img = read_input(input)?;
    let l = levels.resolve(&img);
    let pyr = build_pyramid(&img, l)?;
    write(output, &encode_container(&pyr)?)?;
    say!("input {} at {} bits, L = {l}", img.shape(), img.bit_depth());
    for (i, s) in level_shapes(img.shape(), l)?.iter().enumerate().skip(1) {
        say!("level {i}: F{i} {s} ({})", pyr.levels[i - 1].axis);
    }
    say!("coarsest {}", pyr.coarsest.shape());
    Ok(())
}

fn cmd_reconstruct(input: &Path, output: &Path) -> Result<()> {
    let data = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let img = invert_pyramid(&decode_container(&data)?)?;
    write_image(output, &img)?;
    say!("{} at {} bits", img.shape(), img.bit_depth());
    Ok(())
}

fn cmd_encode(input: &Path, output: &Path, opts: &EncodeOpts) -> Result<()> {
    let img = read_input(input)?;
    let (stream, report) = codec::encode_with_report(&img, &opts.config(&img))?;
    write(output, &stream.to_bytes()?)?;
    say!("{report}");
    Ok(())
}

fn cmd_decode(input: &Path, output: &Path) -> Result<()> {
    let data = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let img = codec::decode_bytes(&data)?;
    write_image(output, &img)?;
    say!("{} at {} bits", img.shape(), img.bit_depth());
    Ok(())
}

fn load_dir(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension().and_then(|e| e.to_str()).is_some_and(|e| {
            matches!(
                e.to_ascii_lowercase().as_str(),
                "ppm" | "pgm" | "pnm" | "png"
            )
        })
    });
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Domain(format!("no images in {}", dir.display())).into());
    }
    paths.iter().map(|p| read_input(p)).collect()
}

fn cmd_stats(
    dir: &Path,
    out: &Path,
    max_distance: usize,
    levels: Levels,
    per_axis: bool,
) -> Result<()> {
    let images = load_dir(dir)?;
    let l = levels.resolve(&images[0]);
    let first = &images[0];
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let head = csv_provenance(first.channels(), first.bit_depth(), images.len(), false);
    let rows = pyramid_entropy_profile(&images, l)?;
    write(
        &out.join("entropy.csv"),
        format!("{head}{}", entropy_profile_csv(&rows)).as_bytes(),
    )?;
    for r in &rows {
        say!("{:<10} {:.4} bits", r.label, r.entropy_bits);
    }

    for (label, comps) in pyramid_components(&images, l)? {
        let refs: Vec<&Image> = comps.iter().collect();
        let fits = refs[0].height().min(refs[0].width()).saturating_sub(1);
        let d = max_distance.min(fits);
        if d == 0 {
            continue;
        }
        let curve = mutual_information_curve(&refs, d, None)?;
        let head = csv_provenance(
            first.channels(),
            first.bit_depth(),
            images.len(),
            curve.requantized,
        );
        let name = format!("mi_{label}.csv");
        write(
            &out.join(&name),
            format!("{head}{}", mi_curve_csv(&curve, per_axis)).as_bytes(),
        )?;
        say!("{name}: MI(1) = {:.4} bits", curve.mi_bits[0]);
    }
    Ok(())
}

fn cmd_critical_path(n0: u64, coarsest: u64, n_squeeze: &[u32]) -> Result<()> {
    say!("{}", critical_path(n0, coarsest, n_squeeze)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decompose {
            input,
            output,
            levels,
        } => cmd_decompose(&input, &output, levels),
        Command::Reconstruct { input, output } => cmd_reconstruct(&input, &output),
        Command::Encode {
            input,
            output,
            opts,
        } => cmd_encode(&input, &output, &opts),
        Command::Decode { input, output } => cmd_decode(&input, &output),
        Command::Stats {
            dir,
            out,
            max_distance,
            levels,
            per_axis,
        } => cmd_stats(&dir, &out, max_distance, levels, per_axis),
        Command::CriticalPath {
            n0,
            coarsest,
            n_squeeze,
        } => cmd_critical_path(n0, coarsest, &n_squeeze),
        Command::Despeckle {
            input,
            output,
            window,
            trees,
            subsample,
            contamination,
            seed,
            neighborhood,
        } => {
            let cfg = DespeckleConfig {
                window,
                forest: ForestConfig {
                    trees,
                    subsample,
                    contamination,
                    seed,
                },
                neighborhood,
            };
            let img = read_input(&input)?;
            let out = despeckle(&img, &cfg)?;
            write_image(&output, &out.image)?;
            say!(
                "window={window} trees={trees} subsample={subsample} contamination={contamination} seed={seed} neighborhood={neighborhood}"
            );
            say!(
                "flagged {} pixels, changed {}",
                out.mask.count(),
                out.changed
            );
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Integrity(_)) => 3,
        _ => 2,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PYRCODEC_THREADS") {
        let n: usize =
            v.parse().ok().filter(|&n| n > 0).with_context(|| {
                format!("PYRCODEC_THREADS must be a positive integer, got {v:?}")
            })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
