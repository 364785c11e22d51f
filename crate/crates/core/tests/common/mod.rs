//! Property checks shared by the proptest suites and the acceptance run.
//! Each returns `Err` with a short description of the first violation.
#![allow(dead_code)]

use zpos_core::inference::{apply_shifts, estimate_positions_with, IterationState};
use zpos_core::render::{render_psm_image, resample_volume, ResampleMethod};
use zpos_core::synthetic::{generate_volume, synthesize_psm, Decay, GroundTruth};
use zpos_core::{compute_psm, DecayCurve, EstimateOptions, ImageStack, PairwiseSimilarityMatrix, StackData};

pub type Check = Result<(), String>;

pub fn exp3() -> Decay {
    Decay::Exponential { tau: 3.0 }
}

pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn psm_invariants(psm: &PairwiseSimilarityMatrix) -> Check {
    let n = psm.n();
    for i in 0..n {
        ensure(psm.get(i, i) == Some(1.0), || format!("diagonal ({i},{i}) = {:?}", psm.get(i, i)))?;
        for j in 0..n {
            let (a, b) = (psm.get(i, j), psm.get(j, i));
            ensure(a.map(f64::to_bits) == b.map(f64::to_bits), || format!("({i},{j}) {a:?} vs {b:?}"))?;
            if let Some(v) = a {
                ensure((-1.0..=1.0).contains(&v), || format!("({i},{j}) = {v} outside [-1,1]"))?;
                ensure(i.abs_diff(j) <= psm.range(), || format!("({i},{j}) computed beyond range"))?;
            } else {
                ensure(i.abs_diff(j) > psm.range(), || format!("({i},{j}) missing inside range"))?;
            }
        }
    }
    Ok(())
}

/// A small smooth f32 stack with enough texture for every section.
pub fn smooth_stack(w: usize, h: usize, d: usize, seed: u64) -> ImageStack {
    generate_volume(w, h, d, 1.5, seed).expect("valid volume")
}

/// `smooth_stack` quantized to 8 bits.
pub fn smooth_u8_stack(w: usize, h: usize, d: usize, seed: u64) -> ImageStack {
    let s = smooth_stack(w, h, d, seed);
    let StackData::F32(v) = s.data() else { unreachable!() };
    let data = v.iter().map(|&x| (x * 255.0).round() as u8).collect();
    ImageStack::new(w, h, d, 1.0, 1.0, StackData::U8(data)).unwrap()
}

pub fn affine_rescaled(stack: &ImageStack, alpha: f64, beta: f64) -> ImageStack {
    let data = match stack.data() {
        StackData::F32(v) => v.iter().map(|&x| (alpha * x as f64 + beta) as f32).collect(),
        StackData::U8(v) => v.iter().map(|&x| (alpha * x as f64 + beta) as f32).collect(),
    };
    ImageStack::new(
        stack.width(),
        stack.height(),
        stack.depth(),
        stack.pixel_size_xy,
        stack.nominal_spacing_z,
        StackData::F32(data),
    )
    .expect("finite rescale")
}

/// `alpha` and `beta` should keep the rescaled samples exact in f32 (for
/// a u8 stack: `alpha = k / 8`, integer `beta`), so only the similarity
/// arithmetic is under test.
pub fn ncc_affine_invariance(stack: &ImageStack, range: usize, alpha: f64, beta: f64) -> Check {
    let a = compute_psm(stack, range).map_err(|e| e.to_string())?;
    let b = compute_psm(&affine_rescaled(stack, alpha, beta), range).map_err(|e| e.to_string())?;
    for i in 0..a.n() {
        for j in 0..a.n() {
            if let (Some(x), Some(y)) = (a.get(i, j), b.get(i, j)) {
                ensure((x - y).abs() <= 1e-6, || format!("({i},{j}): {x} vs {y} after {alpha}x+{beta}"))?;
            }
        }
    }
    Ok(())
}

/// Strictly decreasing curve from positive decrements scaled to end above 0.
pub fn strict_curve(decrements: &[f64]) -> DecayCurve {
    let total: f64 = decrements.iter().sum();
    let mut samples = vec![1.0];
    for d in decrements {
        let last = *samples.last().unwrap();
        samples.push(last - 0.95 * d / total);
    }
    DecayCurve::new(samples).expect("valid strict curve")
}

pub fn image_ncc_affine_invariance(a: &[f64], b: &[f64], w: usize, alpha: f64, beta: f64) -> Check {
    use zpos_core::{ncc, Image};
    let h = a.len() / w;
    let img = |v: &[f64], f: &dyn Fn(f64) -> f64| Image::new(w, h, v.iter().map(|&x| f(x)).collect()).unwrap();
    let id = |x: f64| x;
    let aff = |x: f64| alpha * x + beta;
    let x = ncc(&img(a, &id), &img(b, &id)).map_err(|e| e.to_string())?;
    let y = ncc(&img(a, &aff), &img(b, &aff)).map_err(|e| e.to_string())?;
    ensure((x - y).abs() <= 1e-6, || format!("{x} vs {y} after {alpha}x+{beta}"))
}

pub fn invert_identity(curve: &DecayCurve, d: f64) -> Check {
    let back = curve.invert(curve.eval(d));
    ensure((back - d).abs() <= 1e-9, || format!("invert(eval({d})) = {back}"))
}

/// `s` chosen so that `c + damping * s = scale * c + offset`.
pub fn shifts_cancel(c: &[f64], scale: f64, offset: f64, opts: &EstimateOptions) -> Check {
    let s: Vec<f64> = c
        .iter()
        .map(|&x| ((scale - 1.0) * x + offset) / opts.shift_damping)
        .collect();
    let out = apply_shifts(c, &s, opts).map_err(|e| e.to_string())?;
    for (i, (&a, &b)) in c.iter().zip(&out).enumerate() {
        ensure((a - b).abs() <= 1e-9, || format!("section {i}: {a} became {b} (scale {scale}, offset {offset})"))?;
    }
    Ok(())
}

/// Checks the per-iteration invariants and returns the final coordinates.
pub fn solve_checked(psm: &PairwiseSimilarityMatrix, opts: &EstimateOptions) -> Result<zpos_core::SolverResult, String> {
    let n = psm.n();
    let mut violation: Option<String> = None;
    let result = estimate_positions_with(psm, opts, |st: &IterationState<'_>| {
        if violation.is_some() {
            return;
        }
        violation = iteration_invariants(st, n, opts).err();
    })
    .map_err(|e| e.to_string())?;
    match violation {
        Some(v) => Err(v),
        None => Ok(result),
    }
}

pub fn iteration_invariants(st: &IterationState<'_>, n: usize, opts: &EstimateOptions) -> Check {
    let it = st.iteration;
    let c = st.coordinates;
    let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ensure(lo.abs() <= 1e-9 && (hi - (n - 1) as f64).abs() <= 1e-9, || {
        format!("iteration {it}: coordinate span [{lo}, {hi}]")
    })?;
    for curve in st.curves.iter() {
        let s = curve.samples();
        ensure(s[0] == 1.0, || format!("iteration {it}: rho[0] = {}", s[0]))?;
        ensure(s.windows(2).all(|w| w[1] <= w[0]), || format!("iteration {it}: curve not monotone"))?;
        ensure(s.iter().all(|v| (0.0..=1.0).contains(v)), || format!("iteration {it}: curve outside [0,1]"))?;
    }
    ensure(st.quality.iter().all(|&m| (1.0..=opts.m_max).contains(&m)), || {
        format!("iteration {it}: quality outside [1, {}]", opts.m_max)
    })?;
    ensure(st.objective.total() >= 0.0, || format!("iteration {it}: negative objective"))
}

/// Reversing the section order reverses the coordinates.
pub fn reversal_equivariance(psm: &PairwiseSimilarityMatrix, opts: &EstimateOptions) -> Check {
    let n = psm.n();
    let rev: Vec<usize> = (0..n).rev().collect();
    let a = zpos_core::estimate_positions(psm, opts).map_err(|e| e.to_string())?;
    let b = zpos_core::estimate_positions(&psm.select(&rev).unwrap(), opts).map_err(|e| e.to_string())?;
    let top = (n - 1) as f64;
    for i in 0..n {
        let mirrored = top - b.coordinates[n - 1 - i];
        ensure((a.coordinates[i] - mirrored).abs() <= 1e-9, || {
            format!("section {i}: {} vs mirrored {mirrored}", a.coordinates[i])
        })?;
    }
    for (k, (x, y)) in a.objective_history.iter().zip(&b.objective_history).enumerate() {
        ensure((x - y).abs() <= 1e-9 * x.abs().max(1.0), || format!("objective {k}: {x} vs {y}"))?;
    }
    Ok(())
}

/// Exact decay at grid positions is left unchanged by one iteration.
pub fn exact_fixed_point(n: usize, range: usize, decay: Decay) -> Check {
    let truth = GroundTruth::new(grid(n), vec![1.0; n], decay).unwrap();
    let psm = synthesize_psm(&truth, 0.0, range, 0).unwrap();
    let opts = EstimateOptions {
        iterations: 1,
        ..EstimateOptions::default()
    };
    let r = zpos_core::estimate_positions(&psm, &opts).map_err(|e| e.to_string())?;
    for i in 0..n {
        ensure((r.coordinates[i] - i as f64).abs() <= 1e-9, || format!("c[{i}] = {}", r.coordinates[i]))?;
        ensure((r.quality[i] - 1.0).abs() <= 1e-9, || format!("m[{i}] = {}", r.quality[i]))?;
    }
    Ok(())
}

/// Results under 1 and 4 worker threads are bit-identical.
pub fn thread_determinism(stack: &ImageStack, range: usize, opts: &EstimateOptions) -> Check {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let psm = compute_psm(stack, range).unwrap();
                let r = zpos_core::estimate_positions(&psm, opts).unwrap();
                (psm, r)
            })
    };
    let (p1, r1) = run(1);
    let (p4, r4) = run(4);
    ensure(p1 == p4, || "similarity matrices differ between 1 and 4 threads".into())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&r1.coordinates) == bits(&r4.coordinates), || "coordinates differ between 1 and 4 threads".into())?;
    ensure(bits(&r1.quality) == bits(&r4.quality), || "quality differs between 1 and 4 threads".into())?;
    ensure(bits(&r1.objective_history) == bits(&r4.objective_history), || {
        "objective history differs between 1 and 4 threads".into()
    })
}

pub fn render_monotone(psm: &PairwiseSimilarityMatrix, c: &[f64], i: usize, j: usize, bump: f64) -> Check {
    let Some(v) = psm.get(i, j) else { return Ok(()) };
    if i == j {
        return Ok(());
    }
    let mut raised = psm.clone();
    raised.set(i, j, (v + bump).min(1.0)).unwrap();
    let size = 2 * psm.n();
    let a = render_psm_image(psm, c, size).unwrap();
    let b = render_psm_image(&raised, c, size).unwrap();
    ensure(a.data.iter().zip(&b.data).all(|(x, y)| y >= x), || {
        format!("raising ({i},{j}) by {bump} darkened a pixel")
    })
}

pub fn resample_identity(stack: &ImageStack) -> Check {
    let c = grid(stack.depth());
    for method in [ResampleMethod::Floor, ResampleMethod::Linear] {
        let out = resample_volume(stack, &c, method, stack.depth()).map_err(|e| e.to_string())?;
        ensure(out.data() == stack.data(), || format!("{method:?} resampling at identity changed samples"))?;
    }
    Ok(())
}
