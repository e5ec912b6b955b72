use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use setreg::dataset::{generate_set, save_set, synthetic_scene, PerturbationSpec};
use setreg::io::load_image;

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Output directory for the PNGs and truth.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Base raster (PNG/PGM). Defaults to a procedural edge-rich texture.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Number of views.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Largest |dx|, |dy| of the random true shifts.
    #[arg(long, default_value_t = 40)]
    pub shift_bound: u32,
    /// RNG seed (fixes shifts and all perturbation draws).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gamma exponent range, e.g. 0.6,1.6.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.6, 1.6])]
    pub gamma: Vec<f64>,
    /// Peak illumination-ramp amplitude (fraction of dynamic range).
    #[arg(long, default_value_t = 0.3)]
    pub ramp: f64,
    /// Occluders per image.
    #[arg(long, default_value_t = 6)]
    pub occluders: usize,
    /// Occluder size range as a fraction of image width, e.g. 0.04,0.08.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.04, 0.08])]
    pub occluder_size: Vec<f64>,
    /// Additive Gaussian noise sigma.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Disable all appearance perturbations (views are pure crops).
    #[arg(long)]
    pub clean: bool,
}

pub fn run(args: GenerateArgs) -> Result<()> {
    if args.n < 2 {
        bail!("--n must be at least 2, got {}", args.n);
    }
    let spec = if args.clean {
        PerturbationSpec::none(args.seed)
    } else {
        PerturbationSpec {
            gamma_range: (args.gamma[0], args.gamma[1]),
            ramp_amplitude: args.ramp,
            occluder_count: args.occluders,
            occluder_size_range: (args.occluder_size[0], args.occluder_size[1]),
            noise_sigma: args.noise,
            seed: args.seed,
        }
    };
    let margin = 2 * args.shift_bound as usize;
    let base = match &args.base {
        Some(path) => load_image(path).with_context(|| format!("loading {}", path.display()))?,
        None => synthetic_scene(args.width + margin, args.height + margin, args.seed),
    };
    let (set, truth) = generate_set(
        &base,
        args.n,
        args.width,
        args.height,
        args.shift_bound,
        &spec,
    )?;
    save_set(&args.out, &set, Some(&truth))?;
    println!("{}", args.out.display());
    Ok(())
}
