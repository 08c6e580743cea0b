//! The pipeline commands. Each one fills an [`Artifact`] and returns its summary.

use std::collections::BTreeMap;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::{json, Value};

use crate::domain::{FactorVector, Interval, Orthotope, Trajectory};
use crate::estimation::{filter_fits, median_ci, multi_start_fit, write_fits_csv};
use crate::loss::{EvalCounter, Objective};
use crate::models::integrate;
use crate::oat::{promissory_box, PromissoryBox};
use crate::report::fmt_f64;
use crate::rng::{stream_seed, StreamRng};
use crate::sampling::{monte_carlo, quantile_sorted, uncertainty_analysis};
use crate::sensitivity::{convergence_analysis, sensitivity_analysis};
use crate::shrink::{csb_estimate, ShrinkTrace, Termination};

use super::artifact::Artifact;
use super::config::Problem;
use super::{CliError, Command};

/// Named sub-streams of the root seed.
pub fn seeds_for(command: Command, root: u64, repeats: usize) -> BTreeMap<String, u64> {
    let names: Vec<String> = match command {
        Command::Fit => vec!["data".into(), "fit".into()],
        Command::Oat => vec![],
        Command::Csb => vec!["shrink".into(), "certificate".into()],
        Command::Ua => vec!["ua".into()],
        Command::Sa => vec!["sa".into()],
        Command::Converge => vec!["converge".into()],
        Command::CsbStudy => (0..repeats).map(|r| format!("study-{r}")).collect(),
    };
    names.into_iter().map(|n| (n.clone(), stream_seed(root, &n))).collect()
}

pub struct Outcome {
    pub summary: Value,
    pub exit_code: i32,
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn nominal_objective(p: &Problem, x_hat: &FactorVector, counter: &EvalCounter) -> Result<Objective, CliError> {
    Objective::against_nominal(
        p.model.clone(),
        x_hat,
        &p.grid,
        p.config.integrator,
        p.loss_config(),
        counter.clone(),
    )
    .map_err(|e| CliError::Numeric(format!("nominal point does not integrate: {e}")))
}

fn data_trajectory(p: &Problem, seed: u64, counter: &EvalCounter) -> Result<Trajectory, CliError> {
    let Some(d) = &p.config.data else {
        return Err(CliError::Config("fit needs a [data] section (`synthetic = \"nominal\"` or `file`)".into()));
    };
    if let Some(file) = &d.file {
        return p.read_data_file(file);
    }
    let x = p.nominal()?;
    counter.incr();
    let clean = integrate(p.model.as_ref(), &x, &p.grid, &p.config.integrator).map_err(numeric)?;
    if d.noise == 0.0 {
        return Ok(clean);
    }
    let mut rng = StreamRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, d.noise).map_err(numeric)?;
    let noisy = clean
        .values()
        .iter()
        .map(|v| v * (1.0 + normal.sample(&mut rng)))
        .collect();
    Trajectory::new(p.grid.clone(), noisy).map_err(numeric)
}

fn box_csv(bx: &Orthotope, search: &Orthotope, x_hat: Option<&FactorVector>) -> Result<Vec<u8>, csv::Error> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["factor", "lower", "upper", "norm_lower", "norm_upper"];
    if x_hat.is_some() {
        header.push("nominal");
    }
    wr.write_record(&header)?;
    for (i, name) in bx.names().iter().enumerate() {
        let iv = bx.interval(i);
        let (lo, hi) = normalized(iv, search.interval(i));
        let mut rec = vec![name.clone(), fmt_f64(iv.lower), fmt_f64(iv.upper), fmt_f64(lo), fmt_f64(hi)];
        if let Some(x) = x_hat {
            rec.push(fmt_f64(x.values()[i]));
        }
        wr.write_record(&rec)?;
    }
    wr.into_inner().map_err(|e| e.into_error().into())
}

/// Bounds relative to the search range; unbounded values stay as they are.
fn normalized(iv: Interval, reference: Interval) -> (f64, f64) {
    let w = reference.width();
    if w == 0.0 {
        return (0.0, 0.0);
    }
    ((iv.lower - reference.lower) / w, (iv.upper - reference.lower) / w)
}

fn intervals_json(bx: &Orthotope) -> Value {
    bx.names()
        .iter()
        .zip(bx.intervals())
        .map(|(n, iv)| (n.clone(), json!([iv.lower, iv.upper])))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

pub fn cmd_fit(p: &Problem, seeds: &BTreeMap<String, u64>, counter: &EvalCounter, art: &mut Artifact) -> Result<Outcome, CliError> {
    let data = data_trajectory(p, seeds["data"], counter)?;
    let obj = Objective::against_data(p.model.clone(), data.clone(), p.config.integrator, p.loss_config(), counter.clone());
    let cfg = p.fit_config(seeds["fit"]);
    let fits = multi_start_fit(&obj, &p.search, &cfg).map_err(numeric)?;
    let names = p.search.names().to_vec();
    art.write_with("fits.csv", |w| write_fits_csv(&names, &fits, w))?;
    art.write_with("data.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time", "cases"])?;
        for (t, v) in data.grid().points().iter().zip(data.values()) {
            wr.write_record([fmt_f64(*t), fmt_f64(*v)])?;
        }
        wr.flush()
    })?;

    let kept = filter_fits(&fits, cfg.filter);
    let best = fits
        .iter()
        .min_by(|a, b| a.final_loss.total_cmp(&b.final_loss))
        .expect("at least one start");
    let (nominal, ci) = if kept.len() >= 2 {
        let (nom, ci) = median_ci(names.clone(), &kept).map_err(numeric)?;
        art.write_with("median_ci.csv", |w| ci.write_csv(&nom, w))?;
        (nom, Some(ci))
    } else {
        (best.x_star.clone(), None)
    };
    let nominal_map: BTreeMap<&str, f64> = names.iter().map(|s| s.as_str()).zip(nominal.values().iter().copied()).collect();
    art.write_json("nominal.json", &nominal_map)?;

    Ok(Outcome {
        summary: json!({
            "n_starts": fits.len(),
            "n_filtered": kept.len(),
            "best_loss": best.final_loss,
            "converged_starts": fits.iter().filter(|f| f.converged).count(),
            "fit_evals": fits.iter().map(|f| f.eval_count).sum::<usize>(),
            "nominal": nominal_map,
            "median_ci": ci.as_ref().map(|c| c.names.iter().zip(&c.intervals).map(|(n, iv)| (n.clone(), json!([iv.lower, iv.upper]))).collect::<serde_json::Map<_, _>>()),
        }),
        exit_code: 0,
    })
}

fn run_oat(p: &Problem, obj: &Objective, x_hat: &FactorVector, art: &mut Artifact) -> Result<PromissoryBox, CliError> {
    let pb = promissory_box(obj, x_hat, Some(&p.search), &p.oat_config()).map_err(numeric)?;
    let bytes = box_csv(&pb.bx, &p.search, Some(x_hat)).map_err(|e| CliError::Io(e.to_string()))?;
    art.write("promissory.csv", &bytes)?;
    art.write_json("oat_diagnostics.json", &pb.diagnostics)?;
    if pb.all_unresolved() {
        return Err(CliError::Numeric("one-at-a-time search failed for every factor".into()));
    }
    Ok(pb)
}

pub fn cmd_oat(p: &Problem, _seeds: &BTreeMap<String, u64>, counter: &EvalCounter, art: &mut Artifact) -> Result<Outcome, CliError> {
    let x_hat = p.nominal()?;
    let obj = nominal_objective(p, &x_hat, counter)?;
    let pb = run_oat(p, &obj, &x_hat, art)?;
    Ok(Outcome {
        summary: json!({
            "threshold": pb.threshold.threshold_value,
            "lambda": pb.threshold.lambda,
            "promissory_box": intervals_json(&pb.bx),
            "unresolved": pb.diagnostics.iter().flat_map(|d| {
                [(&d.up, "up"), (&d.down, "down")].into_iter().filter(|(b, _)| !b.resolved).map(move |(_, dir)| format!("{}:{dir}", d.factor))
            }).collect::<Vec<_>>(),
        }),
        exit_code: 0,
    })
}

#[derive(Serialize)]
struct Certificate {
    n: usize,
    seed: u64,
    threshold: f64,
    fraction_below: f64,
}

fn certify(obj: &Objective, bx: &Orthotope, n: usize, seed: u64, threshold: f64) -> Result<Certificate, CliError> {
    let mc = monte_carlo(obj, bx, n, seed).map_err(numeric)?;
    Ok(Certificate { n, seed, threshold, fraction_below: mc.fraction_below(threshold) })
}

pub fn cmd_csb(p: &Problem, seeds: &BTreeMap<String, u64>, counter: &EvalCounter, art: &mut Artifact) -> Result<Outcome, CliError> {
    let x_hat = p.nominal()?;
    let obj = nominal_objective(p, &x_hat, counter)?;
    let pb = run_oat(p, &obj, &x_hat, art)?;
    let cfg = p.shrink_config(seeds["shrink"]);
    let (bx, trace) = csb_estimate(&obj, &x_hat, &pb.bx, &cfg).map_err(numeric)?;
    let bytes = box_csv(&bx, &p.search, Some(&x_hat)).map_err(|e| CliError::Io(e.to_string()))?;
    art.write("csb.csv", &bytes)?;
    art.write_with("trace.jsonl", |w| trace.write_jsonl(w))?;
    let cert = certify(&obj, &bx, cfg.n, seeds["certificate"], trace.threshold)?;
    art.write_json("ua_certificate.json", &cert)?;
    let converged = trace.termination == Termination::Converged;
    Ok(Outcome {
        summary: json!({
            "termination": trace.termination,
            "iterations": trace.iterations(),
            "shrink_evals": trace.eval_count,
            "threshold": trace.threshold,
            "csb": intervals_json(&bx),
            "certificate_fraction_below": cert.fraction_below,
        }),
        exit_code: if converged { 0 } else { 4 },
    })
}

pub fn cmd_ua(p: &Problem, seeds: &BTreeMap<String, u64>, counter: &EvalCounter, art: &mut Artifact) -> Result<Outcome, CliError> {
    let x_hat = p.nominal()?;
    let obj = nominal_objective(p, &x_hat, counter)?;
    let bx = p.read_box(p.config.ua.box_file.as_ref())?;
    let thr = obj.threshold(p.lambda).map_err(numeric)?;
    let mc = monte_carlo(&obj, &bx, p.config.ua.n, seeds["ua"]).map_err(numeric)?;
    let ua = uncertainty_analysis(&obj, &mc, &thr);
    art.write_with("ua_envelope.csv", |w| ua.write_envelope_csv(w))?;
    art.write_with("ua_samples.csv", |w| mc.write_csv(w))?;
    Ok(Outcome {
        summary: json!({
            "box": intervals_json(&bx),
            "n": ua.n,
            "threshold": ua.threshold,
            "fraction_below": ua.fraction_below,
            "fraction_exceeding": 1.0 - ua.fraction_below,
            "failed": ua.failed,
        }),
        exit_code: 0,
    })
}

pub fn cmd_sa(p: &Problem, seeds: &BTreeMap<String, u64>, counter: &EvalCounter, art: &mut Artifact) -> Result<Outcome, CliError> {
    let x_hat = p.nominal()?;
    let obj = nominal_objective(p, &x_hat, counter)?;
    let bx = p.read_box(p.config.sa.box_file.as_ref())?;
    let r = sensitivity_analysis(&obj, &bx, p.config.sa.n, seeds["sa"]).map_err(numeric)?;
    art.write_with("sa_indices.csv", |w| r.write_csv(w))?;
    Ok(Outcome {
        summary: json!({
            "box": intervals_json(&bx),
            "n": r.sample_size,
            "status": r.status,
            "sa_evals": r.eval_count,
            "sum_S": r.sum_first(),
            "sum_abs_S": r.sum_abs_first(),
            "sum_ST": r.sum_total(),
        }),
        exit_code: 0,
    })
}

pub fn cmd_converge(p: &Problem, seeds: &BTreeMap<String, u64>, counter: &EvalCounter, art: &mut Artifact) -> Result<Outcome, CliError> {
    let x_hat = p.nominal()?;
    let obj = nominal_objective(p, &x_hat, counter)?;
    let bx = p.read_box(p.config.converge.box_file.as_ref())?;
    let series = convergence_analysis(&obj, &bx, &p.config.converge.sizes, seeds["converge"]).map_err(numeric)?;
    art.write_with("convergence.csv", |w| series.write_csv(w))?;
    Ok(Outcome {
        summary: json!({
            "box": intervals_json(&bx),
            "sizes": p.config.converge.sizes,
            "sign_disagreement": series.points.iter().map(|pt| pt.sign_disagreement()).collect::<Vec<_>>(),
            "last_total_change": series.last_total_change(),
        }),
        exit_code: 0,
    })
}

pub fn cmd_csb_study(
    p: &Problem,
    seeds: &BTreeMap<String, u64>,
    counter: &EvalCounter,
    art: &mut Artifact,
    repeats: usize,
) -> Result<Outcome, CliError> {
    if repeats < 2 {
        return Err(CliError::Config(format!("csb-study needs at least 2 repeats, got {repeats}")));
    }
    let x_hat = p.nominal()?;
    let obj = nominal_objective(p, &x_hat, counter)?;
    let pb = run_oat(p, &obj, &x_hat, art)?;

    let mut runs: Vec<(Orthotope, ShrinkTrace, u64)> = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let seed = seeds[&format!("study-{r}")];
        let (bx, trace) = csb_estimate(&obj, &x_hat, &pb.bx, &p.shrink_config(seed)).map_err(numeric)?;
        runs.push((bx, trace, seed));
    }

    let names = p.search.names();
    art.write_with("study_runs.csv", |w| -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["run".to_string(), "seed".into(), "termination".into(), "iterations".into(), "evals".into()];
        for n in names {
            header.push(format!("{n}_norm_lower"));
            header.push(format!("{n}_norm_upper"));
        }
        wr.write_record(&header)?;
        for (r, (bx, trace, seed)) in runs.iter().enumerate() {
            let term = match trace.termination {
                Termination::Converged => "converged",
                Termination::Imax => "imax",
            };
            let mut rec = vec![r.to_string(), seed.to_string(), term.into(), trace.iterations().to_string(), trace.eval_count.to_string()];
            for i in 0..names.len() {
                let (lo, hi) = normalized(bx.interval(i), p.search.interval(i));
                rec.push(fmt_f64(lo));
                rec.push(fmt_f64(hi));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    })?;

    let mut bounds = Vec::new();
    art.write_with("study_bounds.csv", |w| -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["factor", "side", "min", "q1", "median", "q3", "max"])?;
        for (i, n) in names.iter().enumerate() {
            for side in ["lower", "upper"] {
                let mut v: Vec<f64> = runs
                    .iter()
                    .map(|(bx, _, _)| {
                        let (lo, hi) = normalized(bx.interval(i), p.search.interval(i));
                        if side == "lower" { lo } else { hi }
                    })
                    .collect();
                v.sort_by(f64::total_cmp);
                let q = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&v, q));
                bounds.push(json!({"factor": n, "side": side, "iqr": q[3] - q[1]}));
                let mut rec = vec![n.clone(), side.to_string()];
                rec.extend(q.iter().map(|&x| fmt_f64(x)));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    })?;

    let evals: Vec<u64> = runs.iter().map(|(_, t, _)| t.eval_count).collect();
    let converged = runs.iter().filter(|(_, t, _)| t.termination == Termination::Converged).count();
    Ok(Outcome {
        summary: json!({
            "repeats": repeats,
            "converged_runs": converged,
            "evals_per_run": evals,
            "bounds_iqr": bounds,
        }),
        exit_code: 0,
    })
}
