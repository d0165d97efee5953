//! Empirical studies: gap scaling with the diffusion radius, regularity and
//! feature width of singular functions, and objectivity under frame changes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::coherent::singular_to_functions;
use crate::error::{Error, Result};
use crate::flow::{transformed_flow, FrameTime, FrameTransform, Point};
use crate::operator::{ImageFold, SourceBoxes, Transition};
use crate::partition::{BoxGrid, Cell, Lattice, Rect};
use crate::pipeline::{analyze, solve, Analysis, Experiment};

/// `max |f_i - f_j| / |x_i - x_j|^exponent` over pairs closer than `radius`.
pub fn regularity_modulus(values: &[f64], centers: &[Point], exponent: f64, radius: f64) -> f64 {
    assert_eq!(values.len(), centers.len());
    if !(radius > 0.0) {
        return 0.0;
    }
    let key = |p: Point| ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &c) in centers.iter().enumerate() {
        buckets.entry(key(c)).or_default().push(i);
    }
    let mut best = 0.0f64;
    for (i, &c) in centers.iter().enumerate() {
        let (kx, ky) = key(c);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = buckets.get(&(kx + dx, ky + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j <= i {
                        continue;
                    }
                    let d = c.dist(centers[j]);
                    if d > 0.0 && d <= radius {
                        best = best.max((values[i] - values[j]).abs() / d.powf(exponent));
                    }
                }
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureWidth {
    /// Narrowest 10%-90% rise along a grid row.
    pub along_x: f64,
    /// Narrowest rise along a grid column.
    pub along_y: f64,
    pub width: f64,
}

/// Shortest center distance, along grid rows and columns, separating a box at
/// or below the 10% level from one at or above the 90% level.
///
/// Levels are measured between the two state values, the `weights`-medians of
/// the negative and of the nonnegative part, so a few extreme boxes do not set
/// the scale.
pub fn feature_width(
    values: &[f64],
    weights: &[f64],
    cells: &[Cell],
    lattice: &Lattice,
) -> Result<FeatureWidth> {
    assert_eq!(values.len(), cells.len());
    assert_eq!(values.len(), weights.len());
    let state = |keep: &dyn Fn(f64) -> bool| {
        let mut side: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|&(&v, &w)| keep(v) && w > 0.0)
            .map(|(&v, &w)| (v, w))
            .collect();
        side.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = 0.5 * side.iter().map(|e| e.1).sum::<f64>();
        let mut acc = 0.0;
        side.into_iter().find(|e| {
            acc += e.1;
            acc >= half
        })
    };
    let (Some((lo_state, _)), Some((hi_state, _))) = (state(&|v| v < 0.0), state(&|v| v >= 0.0))
    else {
        return Err(Error::SingleSigned);
    };
    let low = lo_state + 0.1 * (hi_state - lo_state);
    let high = lo_state + 0.9 * (hi_state - lo_state);

    let scan = |lines: HashMap<i64, Vec<(i64, f64)>>, step: f64| {
        let mut best = f64::INFINITY;
        for (_, mut line) in lines {
            line.sort_by_key(|e| e.0);
            let (mut last_low, mut last_high): (Option<i64>, Option<i64>) = (None, None);
            for (pos, v) in line {
                if v <= low {
                    if let Some(h) = last_high {
                        best = best.min((pos - h) as f64 * step);
                    }
                    last_low = Some(pos);
                }
                if v >= high {
                    if let Some(l) = last_low {
                        best = best.min((pos - l) as f64 * step);
                    }
                    last_high = Some(pos);
                }
            }
        }
        best
    };
    let mut rows: HashMap<i64, Vec<(i64, f64)>> = HashMap::new();
    let mut cols: HashMap<i64, Vec<(i64, f64)>> = HashMap::new();
    for (&c, &v) in cells.iter().zip(values) {
        rows.entry(c.iy).or_default().push((c.ix, v));
        cols.entry(c.ix).or_default().push((c.iy, v));
    }
    let along_x = scan(rows, lattice.width);
    let along_y = scan(cols, lattice.height);
    Ok(FeatureWidth {
        along_x,
        along_y,
        width: along_x.min(along_y),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub sigma2: f64,
    pub gap: f64,
    pub holder_f: f64,
    pub holder_g: f64,
    pub width_f: f64,
    pub width_g: f64,
}

/// Least-squares fit of `gap = c epsilon^beta` on logarithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub c: f64,
    pub beta: f64,
    /// Root mean square residual in log space.
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub fit: Option<PowerFit>,
    /// `max gap / epsilon`.
    pub c_hat: f64,
    pub gap_nondecreasing: bool,
    pub holder_nonincreasing: bool,
    pub width_nondecreasing: bool,
}

fn nondecreasing(xs: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[1] >= w[0])
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<PowerFit> {
    if xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta = sxy / sxx;
    let a = my - beta * mx;
    let rms = (lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - a - beta * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some(PowerFit {
        c: a.exp(),
        beta,
        rms,
    })
}

/// One row of the study from an already built operator.
pub fn scaling_row(epsilon: f64, transition: &Transition, exp: &Experiment) -> Result<ScalingRow> {
    let triples = solve(transition, &exp.solver)?;
    let second = triples.get(1).ok_or(Error::TooManyTriples {
        k: 2,
        min_dim: triples.len(),
    })?;
    let (f, g) = singular_to_functions(second, &transition.matrices.p, &transition.matrices.q)?;
    let radius = 4.0 * epsilon;
    let holder_f = regularity_modulus(&f, &transition.source.centers(), 0.5, radius);
    let holder_g = regularity_modulus(&g, &transition.image.centers(), 0.5, radius);
    let lattice = transition.source.grid.lattice();
    let width_f = feature_width(
        &f,
        &transition.matrices.p,
        &transition.source.cells(),
        &lattice,
    )?
    .width;
    let width_g = feature_width(
        &g,
        &transition.matrices.q,
        transition.image.cells(),
        &transition.image.lattice,
    )?
    .width;
    Ok(ScalingRow {
        epsilon,
        sigma2: second.sigma,
        gap: 1.0 - second.sigma,
        holder_f,
        holder_g,
        width_f,
        width_g,
    })
}

pub fn summarize(rows: Vec<ScalingRow>) -> ScalingReport {
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let fit = fit_power_law(&eps, &gaps);
    let c_hat = rows
        .iter()
        .map(|r| r.gap / r.epsilon)
        .fold(f64::NEG_INFINITY, f64::max);
    ScalingReport {
        gap_nondecreasing: nondecreasing(rows.iter().map(|r| r.gap)),
        holder_nonincreasing: nondecreasing(rows.iter().map(|r| -r.holder_f))
            && nondecreasing(rows.iter().map(|r| -r.holder_g)),
        width_nondecreasing: nondecreasing(rows.iter().map(|r| r.width_f))
            && nondecreasing(rows.iter().map(|r| r.width_g)),
        rows,
        fit,
        c_hat,
    }
}

/// Runs the pipeline once per radius and collects gap, regularity and width.
pub fn gap_scaling(base: &Experiment, eps_list: &[f64]) -> Result<ScalingReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidStudy("empty epsilon list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidStudy(
            "epsilon values must be strictly increasing".into(),
        ));
    }
    let grid = base.grid.build()?;
    let (rx, ry) = grid.radii();
    let resolvable = 2.0 * rx.max(ry);
    if let Some(&e) = eps_list.iter().find(|&&e| !(e >= resolvable)) {
        return Err(Error::InvalidStudy(format!(
            "epsilon {e} is below twice the box radius ({resolvable})"
        )));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &epsilon in eps_list {
        let exp = base.with_epsilon(epsilon);
        let row = exp
            .build()
            .and_then(|t| scaling_row(epsilon, &t, &exp))
            .map_err(|e| Error::AtEpsilon {
                epsilon,
                source: Box::new(e),
            })?;
        rows.push(row);
    }
    Ok(summarize(rows))
}

/// A built operator with its analysis.
#[derive(Clone, Debug)]
pub struct Run {
    pub transition: Transition,
    pub analysis: Analysis,
}

pub fn run_experiment(exp: &Experiment) -> Result<Run> {
    let transition = exp.build()?;
    let analysis = analyze(&transition, &exp.solver, &exp.threshold)?;
    Ok(Run {
        transition,
        analysis,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectivityReport {
    pub frame: FrameTransform,
    /// Translation by whole boxes with no rotation, for which the discrete
    /// operators coincide up to relabelling.
    pub grid_exact: bool,
    pub sigma2_original: f64,
    pub sigma2_transformed: f64,
    pub delta_sigma2: f64,
    pub rho_original: f64,
    pub rho_transformed: f64,
    pub n_source: [usize; 2],
    pub n_image: [usize; 2],
    /// Mass-weighted Jaccard index of the pulled-back partition, best label matching.
    pub jaccard: f64,
    /// Every pulled-back label agrees, up to a global swap.
    pub exact_match: bool,
}

/// Grid on the same box size covering `Phi_0(rect)`, snapped to the lattice through the origin.
pub fn transformed_grid(
    base: &BoxGrid,
    frame: &FrameTransform,
    configured: Option<Rect>,
) -> Result<BoxGrid> {
    let r = base.rect;
    let corners = [
        Point::new(r.xmin, r.ymin),
        Point::new(r.xmax, r.ymin),
        Point::new(r.xmin, r.ymax),
        Point::new(r.xmax, r.ymax),
    ]
    .map(|p| frame.transform_point(p, FrameTime::Initial));
    let lat = base.lattice();
    let (w, h) = (lat.width, lat.height);
    if let Some(rect) = configured {
        let slack = 1e-9 * (w + h);
        if let Some(c) = corners.iter().find(|c| {
            c.x < rect.xmin - slack
                || c.x > rect.xmax + slack
                || c.y < rect.ymin - slack
                || c.y > rect.ymax + slack
        }) {
            return Err(Error::NotCovered(format!(
                "transformed corner ({}, {}) lies outside {rect:?}",
                c.x, c.y
            )));
        }
        let nx = ((rect.xmax - rect.xmin) / w).round() as usize;
        let ny = ((rect.ymax - rect.ymin) / h).round() as usize;
        return BoxGrid::new(rect, nx.max(1), ny.max(1));
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for c in corners {
        xmin = xmin.min(c.x);
        xmax = xmax.max(c.x);
        ymin = ymin.min(c.y);
        ymax = ymax.max(c.y);
    }
    let ix0 = (xmin / w + 1e-9).floor();
    let ix1 = (xmax / w - 1e-9).ceil();
    let iy0 = (ymin / h + 1e-9).floor();
    let iy1 = (ymax / h - 1e-9).ceil();
    BoxGrid::new(
        Rect::new(ix0 * w, ix1 * w, iy0 * h, iy1 * h),
        (ix1 - ix0) as usize,
        (iy1 - iy0) as usize,
    )
}

fn is_grid_exact(frame: &FrameTransform, lattice: &Lattice) -> bool {
    let whole = |v: f64, step: f64| ((v / step) - (v / step).round()).abs() < 1e-12;
    frame.theta0 == 0.0
        && frame.theta1 == 0.0
        && frame.b0 == frame.b1
        && whole(frame.b0.x, lattice.width)
        && whole(frame.b0.y, lattice.height)
}

/// What the objectivity comparison needs from the untransformed run; the
/// matrices themselves can be dropped before the transformed build.
#[derive(Clone, Debug)]
pub struct Reference {
    pub source: SourceBoxes,
    pub x_labels: Vec<u8>,
    pub sigma2: f64,
    pub rho: f64,
    pub n_image: usize,
}

impl Reference {
    pub fn of(run: &Run) -> Self {
        Self {
            source: run.transition.source.clone(),
            x_labels: run.analysis.partition.x_labels.clone(),
            sigma2: run.analysis.sigma2(),
            rho: run.analysis.partition.rho,
            n_image: run.transition.matrices.n_image(),
        }
    }
}

/// Builds the operator in the transformed frame and compares it with `reference`.
pub fn objectivity_against(
    base: &Experiment,
    reference: &Reference,
    frame: FrameTransform,
    configured: Option<Rect>,
) -> Result<ObjectivityReport> {
    let grid = base.grid.build()?;
    let tgrid = transformed_grid(&grid, &frame, configured)?;
    let source = SourceBoxes::filtered(tgrid, |c| {
        grid.rect
            .contains(frame.inverse_point(c, FrameTime::Initial))
    });
    if source.is_empty() {
        return Err(Error::NotCovered(
            "no transformed box pulls back into the domain".into(),
        ));
    }
    let fold = if base.flow.periodic_x {
        ImageFold::Frame {
            frame,
            period: base.flow.x_period,
        }
    } else {
        ImageFold::Open
    };
    let flow = transformed_flow(base.flow.flow()?, frame);
    let transition = base.build_with(&source, &flow, fold)?;
    let analysis = analyze(&transition, &base.solver, &base.threshold)?;

    let original = &reference.x_labels;
    let mine = &analysis.partition.x_labels;
    let p = &transition.matrices.p;
    let mut pulled = Vec::with_capacity(source.len());
    for row in 0..source.len() {
        let back = frame.inverse_point(source.center(row), FrameTime::Initial);
        let orig_row = reference.source.locate(back).ok_or_else(|| {
            Error::NotCovered(format!("box {row} pulls back outside the reference grid"))
        })?;
        pulled.push(original[orig_row]);
    }
    let jaccard_for = |swap: bool| {
        let mut inter = [0.0; 2];
        let mut union = [0.0; 2];
        for ((&a, &b), &w) in pulled.iter().zip(mine).zip(p) {
            let a = if swap { 3 - a } else { a };
            for k in 1..=2u8 {
                let (ia, ib) = (a == k, b == k);
                if ia && ib {
                    inter[(k - 1) as usize] += w;
                }
                if ia || ib {
                    union[(k - 1) as usize] += w;
                }
            }
        }
        0.5 * (inter[0] / union[0] + inter[1] / union[1])
    };
    let jaccard = jaccard_for(false).max(jaccard_for(true));
    let same = pulled.iter().zip(mine).all(|(a, b)| a == b);
    let swapped = pulled.iter().zip(mine).all(|(a, b)| *a == 3 - b);
    let s0 = reference.sigma2;
    let s1 = analysis.sigma2();
    Ok(ObjectivityReport {
        frame,
        grid_exact: is_grid_exact(&frame, &grid.lattice()),
        sigma2_original: s0,
        sigma2_transformed: s1,
        delta_sigma2: (s1 - s0).abs(),
        rho_original: reference.rho,
        rho_transformed: analysis.partition.rho,
        n_source: [reference.source.len(), transition.matrices.n_source()],
        n_image: [reference.n_image, transition.matrices.n_image()],
        jaccard,
        exact_match: (same || swapped) && reference.source.len() == transition.matrices.n_source(),
    })
}

pub fn objectivity_check(
    base: &Experiment,
    frame: FrameTransform,
    configured: Option<Rect>,
) -> Result<ObjectivityReport> {
    let reference = Reference::of(&run_experiment(base)?);
    objectivity_against(base, &reference, frame, configured)
}
