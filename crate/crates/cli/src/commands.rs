use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde_json::{json, Value};
use zpos_core::inference::estimate_positions_with;
use zpos_core::render::{
    default_out_depth, export_curves_csv, extract_xz_slice, render_psm_image, resample_volume, write_pgm,
    ResampleMethod,
};
use zpos_core::stackio::{
    load_index_map_csv, load_psm_csv, load_stack, load_truth_csv, load_z_column, save_block_grid,
    save_index_map_csv, save_positions_csv, save_psm_csv, save_stack, save_truth_csv, TruthTable,
};
use zpos_core::synthetic::{
    eval_deviation, generate_volume, kendall_tau, perturb_remove, perturb_reorder, sample_sections, synthesize_psm,
    Alignment, Decay, GroundTruth, Sectioned,
};
use zpos_core::{compute_blockwise_psm, compute_psm, CurveMode, EstimateOptions};

use crate::*;

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t as usize)
            .build_global()
            .context("starting worker pool")?;
    }
    let summary = match &cli.command {
        Command::Psm(a) => psm(a, cli.verbose)?,
        Command::Estimate(a) => estimate(a, cli.verbose)?,
        Command::Render(a) => render(a, cli.verbose)?,
        Command::Simulate(s) => match s {
            SimulateCommand::Psm(a) => simulate_psm(a)?,
            SimulateCommand::Volume(a) => simulate_volume(a)?,
            SimulateCommand::Remove(a) => simulate_remove(a)?,
            SimulateCommand::Reorder(a) => simulate_reorder(a)?,
        },
        Command::Eval(a) => {
            let v = eval(a)?;
            if !cli.json {
                println!("mean {} max {} kendall_tau {}", v["mean"], v["max"], v["kendall_tau"]);
            }
            v
        }
    };
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(())
}

fn status(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

fn psm(a: &PsmArgs, verbose: bool) -> Result<Value> {
    let stack = load_stack(&a.stack)?;
    let t0 = Instant::now();
    let summary = match a.blocks {
        None => {
            let psm = compute_psm(&stack, a.range)?;
            save_psm_csv(&psm, &a.out)?;
            json!({ "n": psm.n(), "range": psm.range(), "pairs": psm.pair_count(), "out": a.out })
        }
        Some((bx, by)) => {
            let grid = compute_blockwise_psm(&stack, bx, by, a.range)?;
            let manifest = save_block_grid(&grid, &a.out)?;
            json!({ "n": manifest.n, "range": manifest.range, "blocks": [bx, by], "out": a.out })
        }
    };
    let secs = t0.elapsed().as_secs_f64();
    if verbose {
        status(format!("similarity: {secs:.3} s"));
    }
    status(format!("wrote {}", a.out.display()));
    let mut summary = summary;
    summary["psm_seconds"] = json!(secs);
    Ok(summary)
}

fn estimate(a: &EstimateArgs, verbose: bool) -> Result<Value> {
    let opts = EstimateOptions {
        iterations: a.iterations,
        shift_damping: a.damping,
        curve_mode: match a.curve {
            CurveArg::Global => CurveMode::Global,
            CurveArg::Local => CurveMode::Local,
        },
        wf_sigma: a.wf_sigma,
        ws_sigma: a.ws_sigma,
        m_max: a.m_max,
        quality_regularization: a.lambda_m,
        allow_reorder: !a.no_allow_reorder,
        seed: a.seed,
    };
    opts.validate()?;
    let t0 = Instant::now();
    let psm = load_psm_csv(&a.psm)?;
    let psm_seconds = t0.elapsed().as_secs_f64();
    if verbose {
        status(format!("loaded {} sections, range {} ({psm_seconds:.3} s)", psm.n(), psm.range()));
    }
    let t0 = Instant::now();
    let result = estimate_positions_with(&psm, &opts, |st| {
        if verbose {
            let o = st.objective;
            eprintln!(
                "iteration {:>4}: objective {:.9e} (fit {:.6e}, quality {:.6e}, shift {:.6e})",
                st.iteration + 1,
                o.total(),
                o.curve_fit,
                o.quality,
                o.shift
            );
        }
    })
    .with_context(|| format!("estimating positions from {}", a.psm.display()))?;
    let inference_seconds = t0.elapsed().as_secs_f64();
    if verbose {
        status(format!("inference: {inference_seconds:.3} s"));
    }

    save_positions_csv(&result.coordinates, &result.quality, &a.out)?;
    if let Some(path) = &a.curves {
        export_curves_csv(&result.curves, path)?;
    }
    let windows = opts.windows(psm.n(), psm.range());
    let (min_spacing, max_spacing) = result.spacing_range();
    let report = json!({
        "n": psm.n(),
        "range": psm.range(),
        "options": opts,
        "windows": {
            "shape": "gaussian",
            "wfSigma": windows.wf_sigma,
            "wsSigma": windows.ws_sigma,
            "note": "window shapes and widths are implementation defaults, not taken from the method description",
        },
        "iterationsRun": result.iterations_run,
        "objectiveHistory": result.objective_history,
        "finalObjective": result.objective_history.last(),
        "minSpacing": min_spacing,
        "maxSpacing": max_spacing,
        "psm_seconds": psm_seconds,
        "inference_seconds": inference_seconds,
    });
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    status(format!(
        "wrote {} ({} sections, spacing {:.4}..{:.4})",
        a.out.display(),
        psm.n(),
        min_spacing,
        max_spacing
    ));
    Ok(report)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn render(a: &RenderArgs, verbose: bool) -> Result<Value> {
    let stack = load_stack(&a.stack)?;
    let c = load_z_column(&a.positions)?;
    ensure!(
        c.len() == stack.depth(),
        "{} has {} positions but {} has {} sections",
        a.positions.display(),
        c.len(),
        a.stack.display(),
        stack.depth()
    );
    let method = match a.method {
        MethodArg::Floor => ResampleMethod::Floor,
        MethodArg::Linear => ResampleMethod::Linear,
    };
    let depth = a.depth.unwrap_or_else(|| default_out_depth(&c));
    let t0 = Instant::now();
    let out = resample_volume(&stack, &c, method, depth)?;
    if verbose {
        status(format!("resampled to {depth} sections ({:.3} s)", t0.elapsed().as_secs_f64()));
    }
    let mut written = Vec::new();
    if let Some(path) = &a.out {
        save_stack(&out, path)?;
        written.push(path.clone());
    }
    if let (Some(y), Some(path)) = (a.xz, &a.out_image) {
        ensure!(y < out.height(), "--xz {y} outside section height {}", out.height());
        write_pgm(&extract_xz_slice(&out, y)?.to_u8(), path)?;
        written.push(path.clone());
    }
    if let (Some(psm_path), Some(path)) = (&a.psm, &a.psm_image) {
        let psm = load_psm_csv(psm_path)?;
        ensure!(
            psm.n() == c.len(),
            "{} has {} sections but {} has {} positions",
            psm_path.display(),
            psm.n(),
            a.positions.display(),
            c.len()
        );
        write_pgm(&render_psm_image(&psm, &c, a.psm_size)?, path)?;
        written.push(path.clone());
    }
    for p in &written {
        status(format!("wrote {}", p.display()));
    }
    Ok(json!({ "depth": depth, "written": written }))
}

fn truth_table(t: &GroundTruth) -> TruthTable {
    TruthTable {
        true_z: t.positions.clone(),
        true_quality: t.quality.clone(),
        kept: vec![true; t.len()],
    }
}

fn simulate_psm(a: &SimPsmArgs) -> Result<Value> {
    let decay = Decay::parse(&a.decay)?;
    ensure!(a.n >= 2, "--n must be at least 2");
    ensure!(a.range >= 1 && a.range < a.n, "--range must be in [1, n - 1]");
    let truth = GroundTruth::jittered(a.n, a.jitter, decay, a.seed)?;
    let psm = synthesize_psm(&truth, a.noise, a.range, a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    save_psm_csv(&psm, a.out_dir.join("psm.csv"))?;
    save_truth_csv(&truth_table(&truth), a.out_dir.join("truth.csv"))?;
    status(format!("wrote psm.csv, truth.csv to {}", a.out_dir.display()));
    Ok(json!({ "n": a.n, "range": a.range, "out_dir": a.out_dir }))
}

fn simulate_volume(a: &SimVolumeArgs) -> Result<Value> {
    let volume = generate_volume(a.width, a.height, a.depth, a.smooth_sigma, a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    save_stack(&volume, a.out_dir.join("volume.json"))?;
    let mut files = vec!["volume.json"];
    if let Some(n) = a.sections {
        ensure!(a.spacing > 0.0, "--spacing must be positive");
        let truth = GroundTruth::jittered(n, a.jitter, Decay::Exponential { tau: 1.0 }, a.seed)?;
        let z: Vec<f64> = truth.positions.iter().map(|p| a.offset + a.spacing * p).collect();
        let stack = sample_sections(&volume, &z)?;
        save_stack(&stack, a.out_dir.join("stack.json"))?;
        save_truth_csv(&truth_table(&truth), a.out_dir.join("truth.csv"))?;
        files.extend(["stack.json", "truth.csv"]);
    }
    status(format!("wrote {} to {}", files.join(", "), a.out_dir.display()));
    Ok(json!({ "files": files, "out_dir": a.out_dir }))
}

/// Sections of the loaded instance, checked for a common count.
struct Instance {
    psm: Option<zpos_core::PairwiseSimilarityMatrix>,
    stack: Option<zpos_core::ImageStack>,
    truth: Option<TruthTable>,
    n: usize,
}

fn load_instance(psm: &Option<std::path::PathBuf>, stack: &Option<std::path::PathBuf>, truth: &Option<std::path::PathBuf>) -> Result<Instance> {
    let psm = psm.as_ref().map(load_psm_csv).transpose()?;
    let stack = stack.as_ref().map(load_stack).transpose()?;
    let truth = truth.as_ref().map(load_truth_csv).transpose()?;
    let counts: Vec<(&str, usize)> = [
        psm.as_ref().map(|p| ("similarity matrix", p.section_count())),
        stack.as_ref().map(|s| ("stack", s.section_count())),
        truth.as_ref().map(|t| ("ground truth kept rows", t.kept.iter().filter(|&&k| k).count())),
    ]
    .into_iter()
    .flatten()
    .collect();
    let n = counts[0].1;
    if let Some((what, m)) = counts.iter().find(|(_, m)| *m != n) {
        bail!("{what} has {m} sections, expected {n} ({})", counts[0].0);
    }
    Ok(Instance { psm, stack, truth, n })
}

fn save_instance(inst: &Instance, dir: &Path) -> Result<Vec<&'static str>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    if let Some(p) = &inst.psm {
        save_psm_csv(p, dir.join("psm.csv"))?;
        files.push("psm.csv");
    }
    if let Some(s) = &inst.stack {
        save_stack(s, dir.join("stack.json"))?;
        files.push("stack.json");
    }
    if let Some(t) = &inst.truth {
        save_truth_csv(t, dir.join("truth.csv"))?;
        files.push("truth.csv");
    }
    Ok(files)
}

fn simulate_remove(a: &SimRemoveArgs) -> Result<Value> {
    let inst = load_instance(&a.psm, &a.stack, &a.truth)?;
    let n = inst.n;
    let mut kept = Vec::new();
    let psm = match &inst.psm {
        Some(p) => {
            let (out, k) = perturb_remove(p, &a.indices)?;
            kept = k;
            Some(out)
        }
        None => None,
    };
    let stack = match &inst.stack {
        Some(s) => {
            let (out, k) = perturb_remove(s, &a.indices)?;
            kept = k;
            Some(out)
        }
        None => None,
    };
    // Rows of the truth table that are current sections, in order.
    let truth = inst.truth.map(|mut t| {
        let rows: Vec<usize> = (0..t.kept.len()).filter(|&r| t.kept[r]).collect();
        for &i in &a.indices {
            t.kept[rows[i]] = false;
        }
        kept = kept.iter().map(|&k| rows[k]).collect();
        t
    });
    let out = Instance {
        psm,
        stack,
        truth,
        n: kept.len(),
    };
    let mut files = save_instance(&out, &a.out_dir)?;
    save_index_map_csv(&kept, a.out_dir.join("kept.csv"))?;
    files.push("kept.csv");
    status(format!("removed {} of {n} sections; wrote {} to {}", n - kept.len(), files.join(", "), a.out_dir.display()));
    Ok(json!({ "sections": kept.len(), "kept": kept, "files": files }))
}

fn simulate_reorder(a: &SimReorderArgs) -> Result<Value> {
    let inst = load_instance(&a.psm, &a.stack, &a.truth)?;
    if let Some(t) = &inst.truth {
        ensure!(
            t.kept.iter().all(|&k| k),
            "ground truth has removed rows; reorder before removing sections"
        );
    }
    let mut perm = Vec::new();
    let psm = match &inst.psm {
        Some(p) => {
            let (out, order) = perturb_reorder(p, a.max_displacement, a.seed)?;
            perm = order;
            Some(out)
        }
        None => None,
    };
    let stack = match &inst.stack {
        Some(s) => {
            let (out, order) = perturb_reorder(s, a.max_displacement, a.seed)?;
            perm = order;
            Some(out)
        }
        None => None,
    };
    let truth = inst.truth.map(|t| TruthTable {
        true_z: perm.iter().map(|&o| t.true_z[o]).collect(),
        true_quality: perm.iter().map(|&o| t.true_quality[o]).collect(),
        kept: vec![true; perm.len()],
    });
    let out = Instance {
        psm,
        stack,
        truth,
        n: inst.n,
    };
    let mut files = save_instance(&out, &a.out_dir)?;
    save_index_map_csv(&perm, a.out_dir.join("permutation.csv"))?;
    files.push("permutation.csv");
    status(format!("reordered {} sections; wrote {} to {}", inst.n, files.join(", "), a.out_dir.display()));
    Ok(json!({ "sections": inst.n, "permutation": perm, "files": files }))
}

fn eval(a: &EvalArgs) -> Result<Value> {
    let est = load_z_column(&a.estimated)?;
    let reference = load_z_column(&a.reference)?;
    let kept = match &a.kept {
        Some(path) => load_index_map_csv(path)?,
        None => {
            ensure!(
                est.len() == reference.len(),
                "{} has {} rows but {} has {}; pass --kept to map between them",
                a.estimated.display(),
                est.len(),
                a.reference.display(),
                reference.len()
            );
            (0..est.len()).collect()
        }
    };
    if let Some(&bad) = kept.iter().find(|&&k| k >= reference.len()) {
        bail!("kept index {bad} outside the {} reference rows", reference.len());
    }
    let align = match a.align {
        AlignArg::None => Alignment::None,
        AlignArg::Affine => Alignment::Affine,
    };
    let d = eval_deviation(&est, &reference, &kept, align)?;
    let matched: Vec<f64> = kept.iter().map(|&k| reference[k]).collect();
    let tau = kendall_tau(&est, &matched);
    Ok(json!({ "mean": d.mean, "max": d.max, "kendall_tau": tau, "sections": kept.len() }))
}
