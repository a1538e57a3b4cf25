//! Batch experiment driver: configure weight/tau/grid, run kernels,
//! identity sweeps, bound fits, cancellation probes, factorization checks,
//! model reconstruction, and spectrum listings; emit CSV/JSON with a config
//! sidecar per output file.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use heatlab::bounds::{
    cancellation_probe, fit_gaussian_bound, fit_gtilde_bound, preliminary_inequalities,
    CancellationConfig, DerivativeSpec, EstimateKernel, KernelFitConfig,
};
use heatlab::config::ExperimentConfig;
use heatlab::error::{Error, Result};
use heatlab::factorization::{
    component_kind, AxisSemigroups, DecoupledWeight, FormIndex, DEFAULT_TENSOR_CAP,
};
use heatlab::model::{boxb_kernel, default_tau_max, TauSlices};
use heatlab::operator::{assemble_box, OperatorForm, OperatorKind};
use heatlab::semigroup::{
    g_kernel_column, kernel_column, szego_projector, szego_projector_with_cut, HeatMethod,
    KernelKind, KernelSlice, Propagator,
};
use heatlab::weights::{
    metric_dm, mu_or_zero, r_fn, random_weight, twist_t, twist_term_bound, C64,
};

#[derive(Parser)]
#[command(name = "heatlab", version, about = "heat semigroup laboratory driver")]
struct Cli {
    #[command(subcommand)]
    command: Task,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for sampled quantities.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `heatlab-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to HEATLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Task {
    /// Heat/Szego kernel columns to CSV.
    Kernel,
    /// Exact combinatorial and polynomial identity sweep.
    Identities,
    /// Envelope fits for the kernel estimates.
    Bounds,
    /// Cancellation probe over a bump-radius sweep.
    Cancel,
    /// Product-kernel sampling for decoupled weights.
    Factor,
    /// Partial-Fourier model kernel reconstruction.
    Model,
    /// Lowest eigenvalues of Box/BoxTilde per tau.
    Spectrum,
}

struct Outputs {
    dir: PathBuf,
    sidecar: serde_json::Value,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf, sidecar: serde_json::Value) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            sidecar,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        let meta = self.dir.join(format!("{name}.meta.json"));
        fs::write(&meta, serde_json::to_vec_pretty(&self.sidecar)?)?;
        self.written.push(meta);
        Ok(())
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("HEATLAB_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = json!({"error": e.to_string()});
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("heatlab-out"));
    let seed = cli.seed.unwrap_or(0);
    let config = match &cli.config {
        Some(path) => Some(ExperimentConfig::parse(&fs::read_to_string(path)?)?),
        None => None,
    };
    let sidecar = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
    });
    let mut outputs = Outputs::new(out_dir, sidecar)?;
    let result = dispatch(cli, config.as_ref(), seed, &mut outputs);
    if result.is_err() {
        outputs.cleanup();
    }
    result
}

fn require_config<'a>(config: Option<&'a ExperimentConfig>) -> Result<&'a ExperimentConfig> {
    config.ok_or_else(|| Error::Config("this subcommand needs --config".into()))
}

fn dispatch(
    cli: &Cli,
    config: Option<&ExperimentConfig>,
    seed: u64,
    outputs: &mut Outputs,
) -> Result<()> {
    match cli.command {
        Task::Identities => run_identities(seed, outputs),
        Task::Kernel => run_kernel(require_config(config)?, cli.plot, outputs),
        Task::Bounds => run_bounds(require_config(config)?, seed, outputs),
        Task::Cancel => run_cancel(require_config(config)?, outputs),
        Task::Factor => run_factor(require_config(config)?, seed, outputs),
        Task::Model => run_model(require_config(config)?, cli.plot, outputs),
        Task::Spectrum => run_spectrum(require_config(config)?, outputs),
    }
}

fn run_identities(seed: u64, outputs: &mut Outputs) -> Result<()> {
    let sweep = heatlab::combinatorics::identity_sweep(20)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let draws = 1000;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let p = random_weight(&mut rng, 4);
        let pt =
            |r: &mut ChaCha8Rng| C64::new(r.random_range(-4.0..4.0), r.random_range(-4.0..4.0));
        let (z, xi, w) = (pt(&mut rng), pt(&mut rng), pt(&mut rng));
        let lhs = twist_t(&p, w, z);
        let rhs = twist_t(&p, w, xi) + twist_t(&p, xi, z) - r_fn(&p, w, xi, z);
        let scale = twist_term_bound(&p, w, z)
            .max(twist_term_bound(&p, w, xi))
            .max(twist_term_bound(&p, xi, z))
            .max(1.0);
        worst = worst.max((lhs - rhs).abs() / scale);
        let anti = (twist_t(&p, z, xi) + twist_t(&p, xi, z)).abs()
            / twist_term_bound(&p, z, xi).max(1.0);
        worst = worst.max(anti);
    }
    let pass = sweep.pass && worst <= 1e-12;
    let report = json!({
        "combinatorics": sweep,
        "weight_identities": {"draws": draws, "max_rel_err": worst, "pass": worst <= 1e-12},
        "pass": pass,
    });
    outputs.write("identities.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!("{report}");
    if pass {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "identity sweep failed: worst relative error {worst:.3e}"
        )))
    }
}

fn run_kernel(cfg: &ExperimentConfig, plot: bool, outputs: &mut Outputs) -> Result<()> {
    let task = cfg
        .kernel
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `kernel` block".into()))?;
    let grid = cfg.grid.build()?;
    let p = cfg.weight.build()?;
    for tau in cfg.tau.values() {
        let w_index = grid.nearest_index(C64::new(task.w[0], task.w[1]))?;
        let slices: Vec<KernelSlice> = match task.kind.as_str() {
            "h" => {
                let prop = Propagator::new(assemble_box(
                    &p,
                    &grid,
                    tau,
                    OperatorKind::Box,
                    OperatorForm::Schrodinger,
                )?);
                task.s
                    .iter()
                    .map(|&s| kernel_column(&prop, w_index, s, task.method))
                    .collect::<Result<_>>()?
            }
            "htilde" => {
                let prop = Propagator::new(assemble_box(
                    &p,
                    &grid,
                    tau,
                    OperatorKind::BoxTilde,
                    OperatorForm::Factored,
                )?);
                task.s
                    .iter()
                    .map(|&s| kernel_column(&prop, w_index, s, task.method))
                    .collect::<Result<_>>()?
            }
            "gtilde" | "szego" => {
                let prop = Propagator::new(assemble_box(
                    &p,
                    &grid,
                    tau,
                    OperatorKind::BoxTilde,
                    OperatorForm::Factored,
                )?);
                let projector = match task.eig_cut {
                    Some(cut) => szego_projector_with_cut(&prop, cut)?,
                    None => szego_projector(&prop, 0.5)?,
                };
                if task.kind == "szego" {
                    let values = projector.apply(&heatlab::semigroup::delta_field(&grid, w_index));
                    vec![KernelSlice {
                        kernel_kind: KernelKind::Szego,
                        s: None,
                        tau,
                        w_index,
                        values,
                        grid,
                    }]
                } else {
                    task.s
                        .iter()
                        .map(|&s| g_kernel_column(&prop, &projector, w_index, s, task.method))
                        .collect::<Result<_>>()?
                }
            }
            other => return Err(Error::Config(format!("unknown kernel kind `{other}`"))),
        };
        for slice in &slices {
            let mut buf = Vec::new();
            slice.write_csv(&mut buf)?;
            let name = slice.file_name();
            outputs.write(&name, &buf)?;
            if plot {
                let n = grid.points_per_axis;
                let mags: Vec<f64> = slice.values.iter().map(|v| v.norm()).collect();
                let mut svg = Vec::new();
                heatlab::plot::heatmap(&mut svg, &name, n, n, &mags)?;
                outputs.write(&format!("{name}.svg"), &svg)?;
            }
        }
    }
    Ok(())
}

fn derivative_from(task: Option<&heatlab::config::DerivCounts>) -> DerivativeSpec {
    match task {
        Some(d) => DerivativeSpec::from_counts(d.n, d.ell),
        None => DerivativeSpec::from_counts(0, 0),
    }
}

fn run_bounds(cfg: &ExperimentConfig, seed: u64, outputs: &mut Outputs) -> Result<()> {
    let task = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `bounds` block".into()))?;
    let grid = cfg.grid.build()?;
    let p = cfg.weight.build()?;
    for tau in cfg.tau.values() {
        let mut fit_cfg = KernelFitConfig::new(p.clone(), tau, grid);
        fit_cfg.seed = seed.wrapping_add(task.seed);
        fit_cfg.spec = derivative_from(task.derivative.as_ref());
        fit_cfg.k_time = task.k_time;
        if let Some(s) = &task.s {
            fit_cfg.s_values = s.clone();
        }
        if let Some(w) = task.w {
            fit_cfg.w_point = C64::new(w[0], w[1]);
        }
        if let Some(n) = task.n_samples {
            fit_cfg.n_z_samples = n;
        }
        let reports = match task.estimate_id.as_str() {
            "heat_H" => vec![fit_gaussian_bound(&fit_cfg)?],
            "heat_H_tau_decay" => {
                fit_cfg.tau_decay_form = true;
                vec![fit_gaussian_bound(&fit_cfg)?]
            }
            "htilde" => vec![fit_gtilde_bound(&fit_cfg, EstimateKernel::Htilde)?],
            "gtilde" => vec![fit_gtilde_bound(&fit_cfg, EstimateKernel::Gtilde)?],
            "szego" => vec![fit_gtilde_bound(&fit_cfg, EstimateKernel::Szego)?],
            "relative_inverse" => {
                vec![fit_gtilde_bound(&fit_cfg, EstimateKernel::RelativeInverse)?]
            }
            "preliminary" => preliminary_inequalities(&p, tau, fit_cfg.seed, 400)?,
            other => return Err(Error::Config(format!("unknown estimate_id `{other}`"))),
        };
        for report in &reports {
            let name = format!("bound_{}_tau{}.json", report.estimate_id, tau);
            outputs.write(&name, serde_json::to_string_pretty(report)?.as_bytes())?;
            let mut csv = Vec::new();
            report.write_samples_csv(&mut csv)?;
            outputs.write(
                &format!("bound_{}_tau{}_samples.csv", report.estimate_id, tau),
                &csv,
            )?;
            println!(
                "{}: verdict={:?} fitted_c={:.4} fitted_C={:.4e}",
                report.estimate_id, report.verdict, report.fitted_c, report.fitted_big_c
            );
        }
    }
    Ok(())
}

fn run_cancel(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<()> {
    let task = cfg
        .cancel
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `cancel` block".into()))?;
    let grid = cfg.grid.build()?;
    let p = cfg.weight.build()?;
    for tau in cfg.tau.values() {
        let probe = CancellationConfig {
            weight: p.clone(),
            tau,
            grid,
            z: C64::new(task.z[0], task.z[1]),
            s: task.s,
            spec: DerivativeSpec::from_counts(task.derivative.n, task.derivative.ell),
            delta_fractions: task.delta_fractions.clone(),
        };
        let samples = cancellation_probe(&probe)?;
        let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
        let spread = ratios.iter().cloned().fold(0.0, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let report = json!({
            "tau": tau,
            "n": task.derivative.n,
            "ell": task.derivative.ell,
            "samples": samples,
            "ratio_spread": spread,
        });
        outputs.write(
            &format!(
                "cancel_n{}_l{}_tau{}.json",
                task.derivative.n, task.derivative.ell, tau
            ),
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        println!("cancel tau={tau}: ratio spread {spread:.3}");
    }
    Ok(())
}

fn run_factor(cfg: &ExperimentConfig, seed: u64, outputs: &mut Outputs) -> Result<()> {
    let task = cfg
        .factor
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `factor` block".into()))?;
    let grid = cfg.grid.build()?;
    let parts = task
        .parts
        .iter()
        .map(|w| w.build())
        .collect::<Result<Vec<_>>>()?;
    for tau in cfg.tau.values() {
        let weight = DecoupledWeight::new(parts.clone(), tau)?;
        let n = weight.n();
        let j = FormIndex::new(n, task.j.clone())?;
        let axes = AxisSemigroups::build(&weight, &grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let mut csv = Vec::new();
        use std::io::Write;
        let header: Vec<String> = (1..=n)
            .flat_map(|k| {
                vec![
                    format!("z{k}_re"),
                    format!("z{k}_im"),
                    format!("w{k}_re"),
                    format!("w{k}_im"),
                ]
            })
            .collect();
        writeln!(csv, "{},re,im", header.join(","))?;
        let trust = 0.7 * grid.radius;
        for _ in 0..task.n_samples {
            let z: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.random_range(-trust..trust), rng.random_range(-trust..trust)))
                .collect();
            let w: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.random_range(-trust..trust), rng.random_range(-trust..trust)))
                .collect();
            let v = heatlab::factorization::product_kernel(
                &axes,
                &j,
                task.s,
                &z,
                &w,
                HeatMethod::Dense,
            )?;
            let mut row = Vec::new();
            for k in 0..n {
                row.push(format!(
                    "{:.17e},{:.17e},{:.17e},{:.17e}",
                    z[k].re, z[k].im, w[k].re, w[k].im
                ));
            }
            writeln!(csv, "{},{:.17e},{:.17e}", row.join(","), v.re, v.im)?;
        }
        let kinds: Vec<String> = (1..=n)
            .map(|k| format!("{:?}", component_kind(&j, k).expect("in range")))
            .collect();
        let meta = json!({
            "tau": tau,
            "j": task.j,
            "component_kinds": kinds,
            "tensor_cap": DEFAULT_TENSOR_CAP,
        });
        outputs.write(&format!("factor_tau{}.csv", tau), &csv)?;
        outputs.write(
            &format!("factor_tau{}.json", tau),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;
    }
    Ok(())
}

fn run_model(cfg: &ExperimentConfig, plot: bool, outputs: &mut Outputs) -> Result<()> {
    let task = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `model` block".into()))?;
    let grid = cfg.grid.build()?;
    let p = cfg.weight.build()?;
    let z = C64::new(task.z[0], task.z[1]);
    let w = C64::new(task.w[0], task.w[1]);
    let tau_max = default_tau_max(&p, z, task.s);
    let quad = match &task.quadrature {
        Some(q) => q.build(tau_max)?,
        None => heatlab::model::TauQuadrature::new(
            tau_max,
            65,
            heatlab::model::QuadRule::Trapezoid,
            heatlab::model::TaperWindow::CosineTaper,
        )?,
    };
    let w_index = grid.nearest_index(w)?;
    let z_index = grid.nearest_index(z)?;
    let taus: Vec<f64> = quad.nodes_weights().iter().map(|&(t, _)| t).collect();
    let slices = TauSlices::build(&p, &grid, task.s, w_index, &taus)?;
    let values = boxb_kernel(&slices, &quad, z_index, &task.t)?;
    let mut csv = Vec::new();
    use std::io::Write;
    writeln!(csv, "s,z_re,z_im,w_re,w_im,t,re,im,d_m,envelope")?;
    let mut series = Vec::new();
    for v in &values {
        let d_m = metric_dm(&p, z, w, v.t);
        let t_dual = v.t + twist_t(&p, z, w);
        let mu_t = mu_or_zero(&p, z, t_dual);
        let lam = heatlab::weights::lambda_big(&p, z, d_m).max(1e-300);
        let envelope = (-(z - w).norm_sqr() / task.s).exp() / (d_m * d_m * lam)
            * (task.s / (mu_t * mu_t).max(1e-300)).min(1.0);
        writeln!(
            csv,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            task.s, z.re, z.im, w.re, w.im, v.t, v.re, v.im, d_m, envelope
        )?;
        series.push((v.t, v.value().norm()));
    }
    outputs.write(&format!("model_s{}.csv", task.s), &csv)?;
    if plot {
        let mut svg = Vec::new();
        heatlab::plot::line_plot(&mut svg, "model kernel magnitude vs t", &[("|H|", series)])?;
        outputs.write(&format!("model_s{}.svg", task.s), &svg)?;
    }
    Ok(())
}

fn run_spectrum(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<()> {
    let task = cfg
        .spectrum
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `spectrum` block".into()))?;
    let grid = cfg.grid.build()?;
    let p = cfg.weight.build()?;
    let variant = if task.variant == "box" {
        OperatorKind::Box
    } else {
        OperatorKind::BoxTilde
    };
    let form = if task.form == "schrodinger" {
        OperatorForm::Schrodinger
    } else {
        OperatorForm::Factored
    };
    let mut csv = Vec::new();
    use std::io::Write;
    writeln!(csv, "tau,index,lambda")?;
    for tau in cfg.tau.values() {
        let prop = Propagator::new(assemble_box(&p, &grid, tau, variant, form)?);
        let eig = prop.dense_eig()?;
        for (i, lam) in eig.eigenvalues.iter().take(task.count).enumerate() {
            writeln!(csv, "{tau},{i},{lam:.17e}")?;
        }
    }
    outputs.write("spectrum.csv", &csv)?;
    Ok(())
}
