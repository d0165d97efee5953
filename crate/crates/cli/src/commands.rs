//! The six verbs. Each reads its inputs, runs one pipeline stage and writes
//! plain-text artifacts into the run directory.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ftcs_core::coherent::{
    atom_excess, coherence, extract, mass_tol, split_correlation, BoundCheck, CoherentPartition,
};
use ftcs_core::diagnostics::{gap_scaling, objectivity_check, ObjectivityReport, ScalingReport};
use ftcs_core::flow::Point;
use ftcs_core::operator::{
    apply_l, apply_l_dual, inner, weighted_matrix, TransferMatrices, Transition,
};
use ftcs_core::partition::{Cell, Lattice};
use ftcs_core::sparse::CsrMatrix;
use ftcs_core::spectral::{residual, top_k_singular_with, SingularTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::persist::{self, RunDir};
use crate::svg::{self, Palette};

pub const P_FILE: &str = "P.txt";
pub const M_FILE: &str = "M.txt";
pub const P_WEIGHTS: &str = "p.txt";
pub const Q_WEIGHTS: &str = "q.txt";
pub const X_BOXES: &str = "x_boxes.csv";
pub const Y_BOXES: &str = "y_boxes.csv";
pub const METADATA: &str = "metadata.toml";
pub const SINGULAR_VALUES: &str = "singular_values.csv";
pub const SVD_INFO: &str = "svd.toml";
pub const PARTITION_X: &str = "partition_x.csv";
pub const PARTITION_Y: &str = "partition_y.csv";
pub const PARTITION_SUMMARY: &str = "partition_summary.csv";

/// Tolerances used by `verify`.
pub const ROW_SUM_TOL: f64 = 1e-12;
pub const WEIGHT_TOL: f64 = 1e-12;
pub const DUALITY_TOL: f64 = 1e-10;
pub const SIGMA1_TOL: f64 = 1e-9;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const BOUND_ALLOWANCE: f64 = 1e-9;

fn u_file(k: usize) -> String {
    format!("u_{k}.csv")
}

fn v_file(k: usize) -> String {
    format!("v_{k}.csv")
}

/// Records `seconds` for `stage` in the metadata file, keeping other stages.
fn record_metadata(
    dir: &RunDir,
    stage: &str,
    mut fields: toml::Table,
    seconds: f64,
) -> CliResult<()> {
    let mut table: toml::Table = match dir.read(METADATA) {
        Ok(body) => body.parse().unwrap_or_default(),
        Err(_) => toml::Table::new(),
    };
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fields.insert("seconds".into(), toml::Value::Float(seconds));
    fields.insert("finished_unix".into(), toml::Value::Integer(now as i64));
    table.insert("config_hash".into(), toml::Value::String(dir.hash.clone()));
    table.insert(
        "version".into(),
        toml::Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    table.insert(stage.into(), toml::Value::Table(fields));
    dir.write(
        METADATA,
        &toml::to_string(&table).expect("metadata serializes"),
    )
}

fn int(v: usize) -> toml::Value {
    toml::Value::Integer(v as i64)
}

fn format_boxes(cells: &[Cell], lattice: &Lattice) -> String {
    let mut s = String::from("box_index,ix,iy,x0,y0,width,height\n");
    for (i, &c) in cells.iter().enumerate() {
        let o = lattice.cell_origin(c);
        writeln!(
            s,
            "{i},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            c.ix, c.iy, o.x, o.y, lattice.width, lattice.height
        )
        .unwrap();
    }
    s
}

struct BoxTable {
    centers: Vec<Point>,
    size: (f64, f64),
}

fn parse_boxes(name: &str, body: &str) -> CliResult<BoxTable> {
    let mut centers = Vec::new();
    let mut size = (0.0, 0.0);
    for line in body.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let nums: Option<Vec<f64>> = cols
            .get(3..7)
            .map(|c| c.iter().filter_map(|v| v.parse().ok()).collect());
        match nums {
            Some(n) if n.len() == 4 => {
                size = (n[2], n[3]);
                centers.push(Point::new(n[0] + 0.5 * n[2], n[1] + 0.5 * n[3]));
            }
            _ => return Err(CliError::Usage(format!("{name}: malformed row {line:?}"))),
        }
    }
    Ok(BoxTable { centers, size })
}

fn read_boxes(dir: &RunDir, name: &str) -> CliResult<BoxTable> {
    parse_boxes(name, &dir.read(name)?)
}

/// `build`: assemble `P`, the weights and `M`, and write them with the box tables.
pub fn build(config: &RunConfig, out: &Path) -> CliResult<RunDir> {
    let exp = config.experiment()?;
    let start = Instant::now();
    let transition = exp.build()?;
    let m = weighted_matrix(&transition.matrices)?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = RunDir::create(out, config)?;
    write_transition(&dir, &transition, &m)?;
    let grid = exp.grid.build()?;
    let (rx, ry) = grid.radii();
    let mut fields = toml::Table::new();
    fields.insert("n_source".into(), int(transition.matrices.n_source()));
    fields.insert("n_image".into(), int(transition.matrices.n_image()));
    fields.insert("nnz".into(), int(transition.matrices.transition.nnz()));
    fields.insert("implicit_diffusion".into(), toml::Value::Float(rx.max(ry)));
    fields.insert("threads".into(), int(rayon::current_num_threads()));
    record_metadata(&dir, "build", fields, seconds)?;
    Ok(dir)
}

fn write_transition(dir: &RunDir, tr: &Transition, m: &CsrMatrix) -> CliResult<()> {
    let tm = &tr.matrices;
    dir.write(P_FILE, &persist::format_matrix(&tm.transition))?;
    dir.write(M_FILE, &persist::format_matrix(m))?;
    dir.write(P_WEIGHTS, &persist::format_vector(&tm.p))?;
    dir.write(Q_WEIGHTS, &persist::format_vector(&tm.q))?;
    let lattice = tr.source.grid.lattice();
    dir.write(X_BOXES, &format_boxes(&tr.source.cells(), &lattice))?;
    dir.write(Y_BOXES, &format_boxes(tr.image.cells(), &tr.image.lattice))?;
    // Column sums of P: the pushed-forward density on the image boxes.
    let ones = vec![1.0; tm.n_source()];
    let density = tm.transition.tr_mul_vec(&ones)?;
    let y_centers = tr.image.centers();
    let plot = svg::heatmap(
        "column sums of P",
        &y_centers,
        (tr.image.lattice.width, tr.image.lattice.height),
        &density,
        Palette::Sequential,
    );
    dir.write_raw("density.svg", &plot)
}

fn load_matrices(dir: &RunDir) -> CliResult<TransferMatrices> {
    let p_mat = persist::parse_matrix(P_FILE, &dir.read(P_FILE)?)?;
    let p = persist::parse_vector(P_WEIGHTS, &dir.read(P_WEIGHTS)?)?;
    if p.len() != p_mat.nrows() {
        return Err(CliError::Usage(format!(
            "{P_WEIGHTS} has {} entries for {} rows",
            p.len(),
            p_mat.nrows()
        )));
    }
    Ok(TransferMatrices {
        q: p_mat.tr_mul_vec(&p)?,
        transition: p_mat,
        p,
    })
}

fn load_weighted(dir: &RunDir) -> CliResult<CsrMatrix> {
    persist::parse_matrix(M_FILE, &dir.read(M_FILE)?)
}

/// `svd`: leading singular triples of the stored `M`.
pub fn svd(run: &Path, k: Option<usize>) -> CliResult<Vec<SingularTriple>> {
    let dir = RunDir::open(run)?;
    let m = load_weighted(&dir)?;
    let mut opts = dir.config.solver.clone();
    if let Some(k) = k {
        opts.k = k;
    }
    let start = Instant::now();
    let triples = top_k_singular_with(&m, &opts)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut summary = String::from("index,sigma,residual\n");
    let mut info = toml::Table::new();
    info.insert("k".into(), int(triples.len()));
    info.insert("tol".into(), toml::Value::Float(opts.tol));
    info.insert(
        "iterations".into(),
        int(triples.first().map_or(0, |t| t.iterations)),
    );
    let degenerate: Vec<toml::Value> = triples
        .iter()
        .map(|t| toml::Value::Boolean(t.degenerate))
        .collect();
    info.insert("degenerate".into(), toml::Value::Array(degenerate));
    for (i, t) in triples.iter().enumerate() {
        let k = i + 1;
        writeln!(summary, "{k},{:.16},{:.6e}", t.sigma, t.residual).unwrap();
        dir.write(&u_file(k), &persist::format_indexed(&t.u))?;
        dir.write(&v_file(k), &persist::format_indexed(&t.v))?;
    }
    dir.write(SINGULAR_VALUES, &summary)?;
    dir.write(
        SVD_INFO,
        &toml::to_string(&info).expect("svd info serializes"),
    )?;

    if triples.len() >= 2 {
        let xs = read_boxes(&dir, X_BOXES)?;
        let ys = read_boxes(&dir, Y_BOXES)?;
        for (k, t) in triples.iter().enumerate().skip(1) {
            let k = k + 1;
            dir.write_raw(
                &format!("u_{k}.svg"),
                &svg::heatmap(
                    &format!("u_{k}, sigma = {:.6}", t.sigma),
                    &xs.centers,
                    xs.size,
                    &t.u,
                    Palette::Diverging,
                ),
            )?;
            dir.write_raw(
                &format!("v_{k}.svg"),
                &svg::heatmap(
                    &format!("v_{k}, sigma = {:.6}", t.sigma),
                    &ys.centers,
                    ys.size,
                    &t.v,
                    Palette::Diverging,
                ),
            )?;
        }
    }
    let mut fields = toml::Table::new();
    fields.insert("k".into(), int(triples.len()));
    record_metadata(&dir, "svd", fields, seconds)?;
    Ok(triples)
}

fn load_triples(dir: &RunDir) -> CliResult<Vec<SingularTriple>> {
    let body = dir.read(SINGULAR_VALUES)?;
    let info: toml::Table = dir
        .read(SVD_INFO)?
        .parse()
        .map_err(|e| CliError::Usage(format!("{SVD_INFO}: {e}")))?;
    let degenerate: Vec<bool> = info
        .get("degenerate")
        .and_then(|v| v.as_array())
        .map(|a| a.iter().map(|v| v.as_bool().unwrap_or(true)).collect())
        .unwrap_or_default();
    let mut triples = Vec::new();
    for line in body.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let parsed: Option<(usize, f64, f64)> = match cols[..] {
            [i, s, r] => i
                .parse()
                .ok()
                .zip(s.parse().ok())
                .zip(r.parse().ok())
                .map(|((i, s), r)| (i, s, r)),
            _ => None,
        };
        let (k, sigma, res) = parsed
            .ok_or_else(|| CliError::Usage(format!("{SINGULAR_VALUES}: malformed row {line:?}")))?;
        let u = persist::parse_indexed(&u_file(k), &dir.read(&u_file(k))?)?;
        let v = persist::parse_indexed(&v_file(k), &dir.read(&v_file(k))?)?;
        let degenerate = degenerate.get(k - 1).copied().unwrap_or(false);
        triples.push(SingularTriple {
            sigma,
            u,
            v,
            residual: res,
            iterations: 0,
            degenerate,
        });
    }
    Ok(triples)
}

/// `extract`: the optimal level-set partition pair from the second triple.
pub fn extract_partition(run: &Path) -> CliResult<(CoherentPartition, BoundCheck)> {
    let dir = RunDir::open(run)?;
    let tm = load_matrices(&dir)?;
    let triples = load_triples(&dir)?;
    let start = Instant::now();
    let part = extract(&tm, &triples, &dir.config.threshold)?;
    let seconds = start.elapsed().as_secs_f64();
    let bound = BoundCheck::new(part.rho, triples[1].sigma);
    dir.write(PARTITION_X, &persist::format_labels(&part.x_labels))?;
    dir.write(PARTITION_Y, &persist::format_labels(&part.y_labels))?;
    dir.write(PARTITION_SUMMARY, &partition_summary(&part, &bound))?;
    let xs = read_boxes(&dir, X_BOXES)?;
    let ys = read_boxes(&dir, Y_BOXES)?;
    let as_f64 = |l: &[u8]| l.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
    dir.write_raw(
        "partition_x.svg",
        &svg::heatmap(
            &format!("X1 (red), X2 (blue), rho = {:.4}", part.rho),
            &xs.centers,
            xs.size,
            &as_f64(&part.x_labels),
            Palette::Labels,
        ),
    )?;
    dir.write_raw(
        "partition_y.svg",
        &svg::heatmap(
            "Y1 (red), Y2 (blue)",
            &ys.centers,
            ys.size,
            &as_f64(&part.y_labels),
            Palette::Labels,
        ),
    )?;
    record_metadata(&dir, "extract", toml::Table::new(), seconds)?;
    let excess = atom_excess(&tm, &part)?;
    if !bound.holds(BOUND_ALLOWANCE + excess) {
        return Err(CliError::Invariant(format!(
            "coherence-bound: rho = {} exceeds 1 + sigma_2 = {} beyond the atom allowance {excess:.3e}",
            part.rho,
            1.0 + bound.sigma2
        )));
    }
    Ok((part, bound))
}

fn partition_summary(part: &CoherentPartition, bound: &BoundCheck) -> String {
    persist::format_summary(&[
        ("b", format!("{:.16e}", part.b)),
        ("c", format!("{:.16e}", part.c)),
        ("mu1", format!("{:.16e}", part.mu[0])),
        ("mu2", format!("{:.16e}", part.mu[1])),
        ("nu1", format!("{:.16e}", part.nu[0])),
        ("nu2", format!("{:.16e}", part.nu[1])),
        ("rho", format!("{:.16e}", part.rho)),
        ("sigma2", format!("{:.16e}", bound.sigma2)),
        ("slack", format!("{:.16e}", bound.slack)),
    ])
}

/// One line of `verify` output.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

/// `verify`: re-check every invariant that the stored artifacts allow.
pub fn verify(run: &Path) -> CliResult<Vec<Check>> {
    let dir = RunDir::open(run)?;
    let p_mat = persist::parse_matrix(P_FILE, &dir.read(P_FILE)?)?;
    let p = persist::parse_vector(P_WEIGHTS, &dir.read(P_WEIGHTS)?)?;
    let q_stored = persist::parse_vector(Q_WEIGHTS, &dir.read(Q_WEIGHTS)?)?;
    let m = load_weighted(&dir)?;
    let mut checks = Vec::new();

    let (worst, err) = p_mat
        .row_sums()
        .iter()
        .enumerate()
        .map(|(i, s)| (i, (s - 1.0).abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    checks.push(Check::new(
        "row-sum",
        err <= ROW_SUM_TOL,
        format!("max |sum_j P_ij - 1| = {err:.3e} at row {worst}"),
    ));

    let min_entry = p_mat.values().iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "nonnegative",
        p_mat.nnz() == 0 || min_entry >= 0.0,
        format!("min entry of P = {min_entry:.3e}"),
    ));

    let shapes = p.len() == p_mat.nrows()
        && q_stored.len() == p_mat.ncols()
        && m.nrows() == p_mat.nrows()
        && m.ncols() == p_mat.ncols();
    checks.push(Check::new(
        "shapes",
        shapes,
        format!(
            "P {}x{}, p {}, q {}, M {}x{}",
            p_mat.nrows(),
            p_mat.ncols(),
            p.len(),
            q_stored.len(),
            m.nrows(),
            m.ncols()
        ),
    ));
    if !shapes {
        return finish(checks);
    }

    let p_sum: f64 = p.iter().sum();
    let p_ok = (p_sum - 1.0).abs() <= WEIGHT_TOL && p.iter().all(|&v| v > 0.0);
    checks.push(Check::new(
        "source-measure",
        p_ok,
        format!(
            "sum p = {p_sum:.16}, min p = {:.3e}",
            p.iter().copied().fold(f64::INFINITY, f64::min)
        ),
    ));

    let q = p_mat.tr_mul_vec(&p)?;
    let q_err = q
        .iter()
        .zip(&q_stored)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "image-measure",
        q_err <= WEIGHT_TOL,
        format!("max |p^T P - q| = {q_err:.3e}"),
    ));

    let tm = TransferMatrices {
        transition: p_mat,
        p,
        q,
    };
    let m_ok = tm.transition.indptr() == m.indptr() && tm.transition.indices() == m.indices();
    let m_err = if m_ok {
        tm.transition
            .triplets()
            .zip(m.values())
            .map(|((r, c, v), w)| {
                let expect = tm.p[r].sqrt() * v / tm.q[c].sqrt();
                (expect - w).abs() / expect.abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    checks.push(Check::new(
        "weighted-matrix",
        m_err <= WEIGHT_TOL,
        format!("max relative |M - sqrt(p) P / sqrt(q)| = {m_err:.3e}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(dir.config.solver.seed);
    let mut dual_err: f64 = 0.0;
    for _ in 0..100 {
        let f: Vec<f64> = (0..tm.n_source())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let g: Vec<f64> = (0..tm.n_image())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let lhs = inner(&apply_l(&tm, &f)?, &g, &tm.q);
        let rhs = inner(&f, &apply_l_dual(&tm, &g)?, &tm.p);
        dual_err = dual_err.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    checks.push(Check::new(
        "duality",
        dual_err <= DUALITY_TOL,
        format!("max |<Lf,g>_q - <f,L*g>_p| = {dual_err:.3e} over 100 pairs"),
    ));

    if dir.exists(SINGULAR_VALUES) {
        let triples = load_triples(&dir)?;
        let sigma1 = triples.first().map_or(f64::NAN, |t| t.sigma);
        checks.push(Check::new(
            "sigma1",
            (sigma1 - 1.0).abs() <= SIGMA1_TOL,
            format!("sigma_1 = {sigma1:.16}"),
        ));
        let mut worst = 0.0f64;
        for t in &triples {
            if t.u.len() != m.nrows() || t.v.len() != m.ncols() {
                worst = f64::INFINITY;
                break;
            }
            worst = worst.max(residual(&m, t)?);
        }
        checks.push(Check::new(
            "singular-residual",
            worst <= RESIDUAL_TOL,
            format!("max residual = {worst:.3e} over {} triples", triples.len()),
        ));
        let ordered = triples.windows(2).all(|w| w[0].sigma >= w[1].sigma);
        checks.push(Check::new(
            "singular-order",
            ordered,
            "singular values nonincreasing".into(),
        ));

        if dir.exists(PARTITION_X) && triples.len() >= 2 {
            let x = persist::parse_labels(PARTITION_X, &dir.read(PARTITION_X)?)?;
            let y = persist::parse_labels(PARTITION_Y, &dir.read(PARTITION_Y)?)?;
            let summary = persist::parse_summary(&dir.read(PARTITION_SUMMARY)?);
            let stored_rho = summary
                .iter()
                .find(|(k, _)| k == "rho")
                .and_then(|(_, v)| v.parse::<f64>().ok())
                .unwrap_or(f64::NAN);
            let rho = coherence(&tm, &x, &y)?;
            checks.push(Check::new(
                "coherence",
                (rho - stored_rho).abs() <= 1e-12,
                format!("recomputed rho = {rho:.16}, stored {stored_rho:.16}"),
            ));
            let bound = BoundCheck::new(rho, triples[1].sigma);
            let corr = split_correlation(&tm, &x, &y)?;
            checks.push(Check::new(
                "split-correlation",
                corr <= bound.sigma2 + BOUND_ALLOWANCE,
                format!(
                    "<L psi_X, psi_Y> = {corr:.10} <= sigma_2 = {:.10}",
                    bound.sigma2
                ),
            ));
            let part = CoherentPartition::from_labels(&tm, x, y, f64::NAN, f64::NAN)?;
            let excess = atom_excess(&tm, &part)?;
            checks.push(Check::new(
                "coherence-bound",
                bound.holds(BOUND_ALLOWANCE + excess),
                format!(
                    "rho = {rho:.10} <= 1 + sigma_2 = {:.10} (atom allowance {excess:.3e})",
                    1.0 + bound.sigma2
                ),
            ));
            let mismatch = part.mass_mismatch();
            checks.push(Check::new(
                "mass-balance",
                mismatch <= mass_tol(&tm),
                format!("|mu(X1) - nu(Y1)| = {mismatch:.3e}"),
            ));
        }
    }
    finish(checks)
}

fn finish(checks: Vec<Check>) -> CliResult<Vec<Check>> {
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        let mut msg = failed.join(", ");
        for c in checks.iter().filter(|c| !c.passed) {
            write!(msg, "\n  {}: {}", c.name, c.detail).unwrap();
        }
        Err(CliError::Invariant(msg))
    }
}

/// Renders checks one per line.
pub fn format_checks(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        writeln!(
            s,
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        )
        .unwrap();
    }
    s
}

/// Opens `out` for a config-driven study, refusing a directory that belongs to another configuration.
fn study_dir(config: &RunConfig, out: &Path) -> CliResult<RunDir> {
    if out.join(persist::CONFIG_FILE).exists() {
        let existing = RunDir::open(out)?;
        if existing.hash != config.hash() {
            return Err(CliError::Invariant(format!(
                "mixed-run artifacts: {} holds config={} but this configuration is config={}",
                out.display(),
                existing.hash,
                config.hash()
            )));
        }
        return Ok(existing);
    }
    RunDir::create(out, config)
}

/// `scale`: spectral gap, regularity and feature width across epsilon.
pub fn scale(
    config: &RunConfig,
    out: &Path,
    epsilons: Option<Vec<f64>>,
) -> CliResult<ScalingReport> {
    let spec = config.scale.clone().unwrap_or_default();
    let mut base = config.experiment()?;
    if let Some(grid) = spec.grid {
        base.grid = grid;
    }
    if let Some(n) = spec.n_test {
        base.n_test = n;
    }
    let eps = epsilons.unwrap_or(spec.epsilons);
    let start = Instant::now();
    let report = gap_scaling(&base, &eps)?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = study_dir(config, out)?;

    let mut csv = String::from("epsilon,sigma2,gap,holder_f,holder_g,width_f,width_g\n");
    for r in &report.rows {
        writeln!(
            csv,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.epsilon, r.sigma2, r.gap, r.holder_f, r.holder_g, r.width_f, r.width_g
        )
        .unwrap();
    }
    dir.write("scaling.csv", &csv)?;
    let fit = report.fit.as_ref();
    let na = || "nan".to_string();
    dir.write(
        "scaling_summary.csv",
        &persist::format_summary(&[
            ("c_hat", format!("{:.16e}", report.c_hat)),
            ("fit_c", fit.map_or_else(na, |f| format!("{:.16e}", f.c))),
            (
                "fit_beta",
                fit.map_or_else(na, |f| format!("{:.16e}", f.beta)),
            ),
            (
                "fit_rms",
                fit.map_or_else(na, |f| format!("{:.16e}", f.rms)),
            ),
            ("gap_nondecreasing", report.gap_nondecreasing.to_string()),
            (
                "holder_nonincreasing",
                report.holder_nonincreasing.to_string(),
            ),
            (
                "width_nondecreasing",
                report.width_nondecreasing.to_string(),
            ),
        ]),
    )?;
    let series = |f: fn(&ftcs_core::diagnostics::ScalingRow) -> f64| {
        report
            .rows
            .iter()
            .map(|r| (r.epsilon, f(r)))
            .collect::<Vec<_>>()
    };
    dir.write_raw(
        "scaling_gap.svg",
        &svg::line_chart(
            "1 - sigma_2 against epsilon",
            "epsilon",
            "1 - sigma_2",
            &[("gap", series(|r| r.gap))],
            true,
        ),
    )?;
    dir.write_raw(
        "scaling_moduli.svg",
        &svg::line_chart(
            "regularity moduli against epsilon",
            "epsilon",
            "modulus",
            &[("f", series(|r| r.holder_f)), ("g", series(|r| r.holder_g))],
            false,
        ),
    )?;
    dir.write_raw(
        "scaling_width.svg",
        &svg::line_chart(
            "feature width against epsilon",
            "epsilon",
            "width",
            &[("f", series(|r| r.width_f)), ("g", series(|r| r.width_g))],
            false,
        ),
    )?;
    let mut fields = toml::Table::new();
    fields.insert("epsilons".into(), int(eps.len()));
    record_metadata(&dir, "scale", fields, seconds)?;
    Ok(report)
}

/// `objectivity`: rebuild in a rotated and translated frame and compare.
pub fn objectivity(config: &RunConfig, out: &Path) -> CliResult<ObjectivityReport> {
    let spec = config.objectivity.clone().unwrap_or_default();
    let base = config.experiment()?;
    let start = Instant::now();
    let report = objectivity_check(&base, spec.frame, spec.rect)?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = study_dir(config, out)?;
    dir.write(
        "objectivity.csv",
        &persist::format_summary(&[
            ("grid_exact", report.grid_exact.to_string()),
            (
                "sigma2_original",
                format!("{:.16e}", report.sigma2_original),
            ),
            (
                "sigma2_transformed",
                format!("{:.16e}", report.sigma2_transformed),
            ),
            ("delta_sigma2", format!("{:.16e}", report.delta_sigma2)),
            ("rho_original", format!("{:.16e}", report.rho_original)),
            (
                "rho_transformed",
                format!("{:.16e}", report.rho_transformed),
            ),
            ("n_source_original", report.n_source[0].to_string()),
            ("n_source_transformed", report.n_source[1].to_string()),
            ("n_image_original", report.n_image[0].to_string()),
            ("n_image_transformed", report.n_image[1].to_string()),
            ("jaccard", format!("{:.16e}", report.jaccard)),
            ("exact_match", report.exact_match.to_string()),
        ]),
    )?;
    record_metadata(&dir, "objectivity", toml::Table::new(), seconds)?;
    Ok(report)
}
