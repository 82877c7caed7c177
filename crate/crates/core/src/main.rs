use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cramer_gmm::distq::{default_chain_mdp, ground_truth_gaps, train_demo, DemoConfig};
use cramer_gmm::fit::{fit_gmm_to_points, gmm_nd_to_1d, DirectionMode, FitConfig, LossKind};
use cramer_gmm::gmm_nd::{per_direction_c2, DirectionSet};
use cramer_gmm::io;
use cramer_gmm::optim::LearningRates;
use cramer_gmm::oracle::{
    c2_squared_quadrature, energy_mc, mdp_return_distribution, optimal_policy, QuadratureGrid,
};
use cramer_gmm::{c2_squared, Error, Gmm1, Result};

/// Fit and compare Gaussian mixtures with the Cramér 2-distance.
#[derive(Parser)]
#[command(name = "cramer-gmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a point cloud (CSV).
    GenData(GenDataArgs),
    /// Fit a mixture to a point cloud.
    Fit(FitArgs),
    /// Distance between two model files.
    Dist(DistArgs),
    /// Tabular distributional Q-learning on a small chain MDP.
    RlDemo(RlDemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Paper2d,
    Gaussians,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    shape: Shape,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Dimension of the `gaussians` reference mixture.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Components of the `gaussians` reference mixture.
    #[arg(long, default_value_t = 3)]
    components: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Sc2,
    Nll,
    #[value(name = "sc2+nll")]
    Sc2Nll,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Skip the first line of the CSV.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = 10)]
    components: usize,
    #[arg(long, value_enum, default_value = "sc2")]
    loss: LossArg,
    #[arg(long, default_value_t = 1200)]
    steps: usize,
    #[arg(long, default_value_t = 200)]
    nll_steps: usize,
    #[arg(long, default_value_t = 7)]
    slices: usize,
    /// Fixed, evenly spaced directions (2-D data only).
    #[arg(long)]
    equidistant: bool,
    /// Rotation of the first equidistant direction, in radians.
    #[arg(long, default_value_t = 0.0)]
    offset_angle: f64,
    /// Fold uniform directions onto one hemisphere.
    #[arg(long)]
    hemisphere: bool,
    /// Draw uniform directions once instead of every step.
    #[arg(long)]
    fixed_directions: bool,
    #[arg(long, default_value_t = 5e-6)]
    lr_p: f64,
    #[arg(long, default_value_t = 2e-2)]
    lr_mu: f64,
    #[arg(long, default_value_t = 3e-3)]
    lr_s: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    out_history: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Quadrature,
    Energy,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long)]
    model_b: PathBuf,
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    /// Directions for multivariate models.
    #[arg(long, default_value_t = 64)]
    slices: usize,
    /// Evenly spaced directions instead of random ones (2-D only).
    #[arg(long)]
    equidistant: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample pairs for the energy oracle.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
}

#[derive(Args)]
struct RlDemoArgs {
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long)]
    out_history: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Fit(a) => fit(a),
        Command::Dist(a) => dist(a),
        Command::RlDemo(a) => rl_demo(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Nine significant digits, printed in the shortest form that reads back.
fn num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded:?}")
}

fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    match a.shape {
        Shape::Paper2d => {
            let pts = io::gen_paper2d(a.n, a.seed)?;
            io::write_points(&a.out, &pts)?;
            println!("rows={}", pts.len());
            println!("columns=2");
        }
        Shape::Gaussians => {
            let (model, pts) = io::gen_gaussians(a.n, a.dim, a.components, a.seed)?;
            io::write_points(&a.out, &pts)?;
            let model_path = a.out.with_extension("model.json");
            io::save_model(&model_path, &model)?;
            println!("rows={}", pts.len());
            println!("columns={}", a.dim);
            println!("model={}", model_path.display());
        }
    }
    println!("out={}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn fit(a: FitArgs) -> Result<ExitCode> {
    let points = io::read_points(&a.data, a.header)?;
    let cfg = FitConfig {
        steps: a.steps,
        loss_kind: match a.loss {
            LossArg::Sc2 => LossKind::Sc2,
            LossArg::Nll => LossKind::Nll,
            LossArg::Sc2Nll => LossKind::Sc2ThenNll,
        },
        nll_steps: a.nll_steps,
        t_slices: a.slices,
        direction_mode: if a.equidistant {
            DirectionMode::Equidistant2d
        } else {
            DirectionMode::Uniform
        },
        offset_angle: a.offset_angle,
        hemisphere: a.hemisphere,
        lr: LearningRates::new(a.lr_p, a.lr_mu, a.lr_s),
        seed: a.seed,
        resample_directions_every_step: !a.fixed_directions,
    };
    let report = fit_gmm_to_points(&points, a.components, &cfg)?;
    io::save_model(&a.out_model, &report.model)?;
    if let Some(path) = &a.out_history {
        io::write_history(path, &report.loss_history)?;
    }
    let h = &report.loss_history;
    let d = &report.diagnostics;
    println!("dim={}", report.model.dim());
    println!("points={}", points.len());
    println!("components={}", report.model.len());
    println!("steps={}", h.len());
    if report.sc2_steps > 0 {
        println!("sc2_initial_loss={}", num(h[0]));
        println!("sc2_final_loss={}", num(h[report.sc2_steps - 1]));
    }
    if h.len() > report.sc2_steps {
        println!("nll_initial_loss={}", num(h[report.sc2_steps]));
        println!("nll_final_loss={}", num(h[h.len() - 1]));
    }
    println!("non_finite_sc2={}", d.non_finite_sc2);
    println!("non_finite_nll={}", d.non_finite_nll);
    println!("sigma_penalty_activations={}", d.sigma_penalty_activations);
    for (j, r) in d.determinant_ratios.iter().enumerate() {
        println!("determinant_ratio[{j}]={}", num(*r));
    }
    println!("model={}", a.out_model.display());
    Ok(if d.non_finite_events() > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn dist(a: DistArgs) -> Result<ExitCode> {
    let ga = io::load_model(&a.model_a)?;
    let gb = io::load_model(&a.model_b)?;
    if ga.dim() != gb.dim() {
        return Err(Error::DimensionMismatch {
            expected: ga.dim(),
            got: gb.dim(),
        });
    }
    println!("dim={}", ga.dim());
    if let (Some(a1), Some(b1)) = (gmm_nd_to_1d(&ga), gmm_nd_to_1d(&gb)) {
        let value = c2_squared(&a1, &b1);
        println!("c2_squared={}", num(value));
        if let Some(oracle) = a.oracle {
            let (est, se) = oracle_1d(oracle, &a1, &b1, a.samples, a.seed)?;
            report_oracle(oracle, value, est, se);
        }
        return Ok(ExitCode::SUCCESS);
    }

    let dirs = if a.equidistant {
        DirectionSet::equidistant(ga.dim(), a.slices, 0.0)?
    } else {
        DirectionSet::uniform(ga.dim(), a.slices, a.seed)?
    };
    let per = per_direction_c2(&ga, &gb, &dirs)?;
    let raw: f64 = per.iter().sum();
    let value = dirs.weight() * raw;
    println!("slices={}", dirs.len());
    println!("sliced_c2_squared_raw={}", num(raw));
    println!("sliced_c2_squared={}", num(value));
    if let Some(oracle) = a.oracle {
        let mut est = 0.0;
        let mut var = 0.0;
        for (i, nu) in dirs.directions().iter().enumerate() {
            let pa = ga.project(nu)?;
            let pb = gb.project(nu)?;
            let (e, s) = oracle_1d(oracle, &pa, &pb, a.samples, a.seed.wrapping_add(i as u64))?;
            est += e;
            var += s * s;
        }
        let w = dirs.weight();
        report_oracle(oracle, value, w * est, w * var.sqrt());
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_1d(oracle: OracleArg, a: &Gmm1, b: &Gmm1, samples: usize, seed: u64) -> Result<(f64, f64)> {
    match oracle {
        OracleArg::Quadrature => Ok((
            c2_squared_quadrature(a, b, QuadratureGrid::covering(a, b, 4000)),
            0.0,
        )),
        OracleArg::Energy => energy_mc(a, b, samples, seed),
    }
}

fn report_oracle(oracle: OracleArg, closed: f64, est: f64, se: f64) {
    println!(
        "oracle={}",
        match oracle {
            OracleArg::Quadrature => "quadrature",
            OracleArg::Energy => "energy",
        }
    );
    println!("oracle_value={}", num(est));
    if let OracleArg::Energy = oracle {
        println!("oracle_stderr={}", num(se));
    }
    println!("discrepancy={}", num((closed - est).abs()));
}

fn rl_demo(a: RlDemoArgs) -> Result<ExitCode> {
    let mdp = default_chain_mdp(a.gamma)?;
    let cfg = DemoConfig {
        episodes: a.episodes,
        ..DemoConfig::default()
    };
    let outcome = train_demo(&mdp, &cfg, a.seed)?;
    let policy = optimal_policy(&mdp)?;
    let truth = mdp_return_distribution(&mdp, &policy)?;
    let gaps = ground_truth_gaps(&outcome.online, &truth)?;
    if let Some(path) = &a.out_history {
        io::write_history(path, &outcome.loss_history)?;
    }
    println!("episodes={}", a.episodes);
    println!("updates={}", outcome.updates);
    println!("gamma={}", num(a.gamma));
    let policy: Vec<String> = policy.iter().map(|p| p.to_string()).collect();
    println!("policy={}", policy.join(","));
    let mut worst: f64 = 0.0;
    for (s, row) in gaps.iter().enumerate() {
        for (act, g) in row.iter().enumerate() {
            println!("c2_squared[s={s},a={act}]={}", num(*g));
            worst = worst.max(*g);
        }
    }
    println!("max_c2_squared={}", num(worst));
    Ok(ExitCode::SUCCESS)
}

