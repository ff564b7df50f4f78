use serde_json::json;

use super::config::ExperimentConfig;
use super::output::{num, OutputSet};
use crate::acceptance::{Outcome, Suite};
use crate::arch::{sample_dataset, ArchitectureSpec};
use crate::bounds::{bound_report, empirical_vs_bound, ActivationBounds};
use crate::error::Result;
use crate::experiments::{drift_lr, empirical_profiles, offntk_run, seed_range, trained_vs_ntk, OffNtkRun};
use crate::kernel::{gram, kernel_profile};
use crate::linalg::median;
use crate::net::{drift_study, init_params, InitScheme, Optimizer, TrainConfig};
use crate::regress;
use crate::smooth::{grid_angles, mu_report, SpectrumPolicy};

pub fn kernel(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.kernel;
    let mut files = Vec::new();
    for entry in &s.kernels {
        let k = entry.kernel()?;
        let profile = kernel_profile(&k, s.grid, s.normalize)?;
        let (depth, alpha) = entry.columns();
        let label = k.kind().label();
        let name = format!("kernel_{}.csv", entry.tag());
        out.csv(
            &name,
            &["angle_gap", "value", "kind", "L", "alpha"],
            profile.iter().map(|&(g, v)| vec![num(g), num(v), label.to_string(), depth.clone(), alpha.clone()]),
        )?;
        files.push(name);
    }
    out.json("kernel.json", &json!({ "config": s, "files": files }))
}

pub fn regress(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.regress;
    let data = sample_dataset(&s.sampling)?;
    let grid = grid_angles(s.grid);
    let mut curves = Vec::new();
    for entry in &s.kernels {
        let g = gram(&data.points, &entry.kernel()?)?;
        let model = regress::fit(&g, &data.labels)?;
        let f = model.interpolate_grid(s.grid)?;
        let rows = grid
            .iter()
            .zip(f.values())
            .map(|(b, v)| vec![num(*b), num(*v), "0".to_string()])
            .chain(f.anchors().iter().map(|(b, v)| vec![num(*b), num(*v), "1".to_string()]));
        out.csv(&format!("regress_{}.csv", entry.tag()), &["beta", "f_pred", "sample"], rows)?;
        let (mu, error) = match mu_report(&f, &data, s.gamma, &SpectrumPolicy::default()) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        curves.push(json!({
            "kernel": entry.tag(),
            "mu": mu.map(|r| r.mu),
            "mu_report": mu,
            "mu_error": error,
            "jitter_used": model.jitter_used,
            "gram": g.check(),
        }));
    }
    out.json("regress.json", &json!({ "config": s, "dataset": data, "curves": curves }))
}

pub fn empirical(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.empirical;
    let spec = s.arch.spec()?;
    let seeds = seed_range(cfg.seed, s.seeds);
    let e = empirical_profiles(&spec, s.width, &seeds, s.grid)?;
    for (seed, emp) in seeds.iter().zip(&e.empirical) {
        out.csv(
            &format!("empirical_kernel_seed{seed}.csv"),
            &["angle_gap", "empirical", "analytic"],
            e.gaps.iter().zip(emp).zip(&e.analytic).map(|((g, v), a)| vec![num(*g), num(*v), num(*a)]),
        )?;
    }
    let d = e.deviation();
    out.csv(
        "empirical_stats.csv",
        &["angle_gap", "analytic", "mean_abs_deviation", "max_abs_deviation"],
        (0..e.gaps.len()).map(|k| vec![num(e.gaps[k]), num(e.analytic[k]), num(d.mean_abs[k]), num(d.max_abs[k])]),
    )?;
    let mut training = serde_json::Value::Null;
    if s.train {
        let data = sample_dataset(&s.sampling)?;
        let tc = TrainConfig::new(Optimizer::Gd { lr: s.lr }, s.iterations);
        let r = trained_vs_ntk(&spec, &data, s.width, &seeds, &tc, s.train_grid)?;
        for run in &r.runs {
            out.csv(
                &format!("empirical_train_seed{}.csv", run.seed),
                &["beta", "f_net", "f_ntk"],
                r.grid.iter().zip(&run.values).zip(&r.ntk).map(|((b, v), n)| vec![num(*b), num(*v), num(*n)]),
            )?;
        }
        let rel: Vec<f64> = r.runs.iter().map(|x| x.max_deviation / r.ntk_range).collect();
        training = json!({
            "ntk_range": r.ntk_range,
            "runs": r.runs.iter().map(|x| json!({ "seed": x.seed, "final_loss": x.final_loss,
                "max_deviation": x.max_deviation })).collect::<Vec<_>>(),
            "median_relative_deviation": if rel.is_empty() { None } else { Some(median(&rel)) },
            "failures": r.failures,
        });
    }
    out.json(
        "empirical.json",
        &json!({
            "config": s,
            "peak": d.peak,
            "per_seed_max_deviation": d.per_seed_max,
            "max_mean_deviation": d.mean_abs.iter().copied().fold(0.0, f64::max),
            "gram_checks": e.gram_checks,
            "training": training,
        }),
    )
}

pub fn drift(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.drift;
    let spec = s.arch.spec()?;
    let data = sample_dataset(&s.sampling)?;
    let lr = drift_lr(&spec, &data, s.lr_scale)?;
    let mut tc = TrainConfig::new(Optimizer::Gd { lr }, s.iterations);
    tc.center = s.center;
    let study = drift_study(&spec, &data, &s.widths, &seed_range(cfg.seed, s.seeds), &tc)?;
    let rows = study.records.iter().flat_map(|r| {
        r.checkpoints.iter().map(move |c| {
            vec![
                r.width.to_string(),
                r.seed.to_string(),
                c.iteration.to_string(),
                num(c.drift),
                num(c.param_distance),
                num(c.loss),
            ]
        })
    });
    out.csv("drift.csv", &["width", "seed", "checkpoint", "drift", "param_distance", "loss"], rows)?;
    let k = study.seed_slopes.len() as f64;
    let mean = study.seed_slopes.iter().sum::<f64>() / k;
    let sd = if k > 1.0 {
        (study.seed_slopes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    out.json(
        "drift.json",
        &json!({
            "config": s,
            "lr": lr,
            "widths": study.widths,
            "median_drift": study.median_drift,
            "slope": study.slope,
            "seed_slopes": study.seed_slopes,
            "band": {
                "mean": mean,
                "lower": mean - 1.96 * sd / k.sqrt(),
                "upper": mean + 1.96 * sd / k.sqrt(),
                "min": study.seed_slopes.iter().copied().fold(f64::INFINITY, f64::min),
                "max": study.seed_slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            },
        }),
    )
}

pub fn bounds(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.bounds;
    let spec = s.arch.spec()?.with_input_dim(s.input_dim);
    let act = ActivationBounds::new(s.c_phi)?;
    let report = bound_report(&spec, s.width, act)?;
    let empirical = match &s.empirical {
        Some(e) => {
            let p = init_params(&spec, s.width, InitScheme::NtkGaussian, cfg.seed)?;
            Some(empirical_vs_bound(&p, e.grid, act)?)
        }
        None => None,
    };
    out.json("bounds.json", &json!({ "config": s, "report": report, "empirical_vs_bound": empirical }))
}

pub fn oracle(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.oracle;
    let proto = crate::acceptance::OracleProtocol { covariances: s.covariances, samples: s.samples, ..Default::default() };
    let o = crate::acceptance::oracle(&proto, cfg.seed)?;
    let gradient = match &s.gradient {
        Some(g) => {
            let p = crate::acceptance::GradientProtocol {
                widths: g.widths.clone(),
                seeds: g.seeds,
                coordinates: g.coordinates,
                depth: g.depth,
                alpha: g.alpha,
                ..Default::default()
            };
            Some(crate::acceptance::gradients(&p, cfg.seed)?.details)
        }
        None => None,
    };
    out.json("oracle.json", &json!({ "config": s, "expectations": o.details, "gradient_check": gradient }))
}

fn offntk_csv(out: &mut OutputSet, run: &OffNtkRun, grid: &[f64]) -> Result<()> {
    let arch = run.kind.to_string();
    out.csv(
        &format!("offntk_{arch}_seed{}.csv", run.seed),
        &["beta", "f_net"],
        grid.iter().zip(&run.values).map(|(b, v)| vec![num(*b), num(*v)]),
    )
}

pub fn offntk(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let s = &cfg.offntk;
    let data = sample_dataset(&s.sampling)?;
    let mut tc = TrainConfig::new(s.optimizer, s.iterations).with_checkpoints(vec![]);
    tc.keep_best = s.keep_best;
    let grid = grid_angles(s.grid);
    let mut pairs = Vec::new();
    let mut wins = 0;
    for seed in seed_range(cfg.seed, s.seeds) {
        let res = offntk_run(&ArchitectureSpec::resnet(s.depth, s.alpha), &data, s.width, seed, &tc, s.grid, s.gamma)?;
        let mlp = offntk_run(&ArchitectureSpec::mlp(s.depth), &data, s.width, seed, &tc, s.grid, s.gamma)?;
        for r in [&res, &mlp] {
            if r.error.is_none() || !r.values.is_empty() {
                offntk_csv(out, r, &grid)?;
            }
        }
        let win = matches!((res.mu, mlp.mu), (Some(a), Some(b)) if a > b);
        wins += win as usize;
        pairs.push(json!({
            "seed": seed,
            "mu_resnet": res.mu,
            "mu_mlp": mlp.mu,
            "final_loss_resnet": res.final_loss,
            "final_loss_mlp": mlp.final_loss,
            "error_resnet": res.error,
            "error_mlp": mlp.error,
            "resnet_smoother": win,
        }));
    }
    out.json(
        "offntk.json",
        &json!({ "config": s, "dataset": data, "seeds": pairs,
                 "fraction_resnet_smoother": wins as f64 / s.seeds as f64 }),
    )
}

/// Run the configured criteria; the outcomes are returned for the exit status.
pub fn all(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Vec<Outcome>> {
    let suite = Suite { seed: cfg.seed, ..cfg.acceptance.clone() };
    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for r in suite.run_all(&cfg.all.criteria, |o| println!("{}", o.line())) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                println!("[ERROR] {e}");
                errors.push(e.to_string());
            }
        }
    }
    outcomes.sort_by_key(|o| o.id);
    out.csv(
        "acceptance.csv",
        &["criterion", "title", "passed", "summary"],
        outcomes.iter().map(|o| vec![o.id.to_string(), o.title.clone(), o.passed.to_string(), o.summary.clone()]),
    )?;
    out.json("acceptance.json", &json!({ "protocols": suite, "outcomes": outcomes, "errors": errors }))?;
    if let Some(e) = errors.first() {
        return Err(crate::Error::invalid(format!("{} criteria could not be evaluated; first: {e}", errors.len())));
    }
    Ok(outcomes)
}
