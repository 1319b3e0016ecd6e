use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::output::{to_json_bytes, write_atomic, Cell, Table};
use super::{keyed, BasisChoice, OutputFormat, Scenario, ScenarioKind, WindowKind};
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigen, CMatrix, ComplexOperator, ProjectorFamily, PureState};
use crate::histories::{
    consistency_defect, decoherence_defect, decoherence_matrix_pure, probabilities, DecoherenceMatrix, HistorySpec,
};
use crate::kernels::{influence_phase, kernel_table, OscillatorBath, SpectralDensity};
use crate::records::{
    decoherence_condition, displaced_marginals, fourier_modes_all, gaussian_widths, history_count, im_w_fourier,
    info_counts, random_smooth_path, record_trace_factor, GeneralizedInfluence, RecordWindow, HIGH_T_NOTE,
    WIDTH_DISCREPANCY_NOTE,
};
use crate::two_state::{
    build_model, detection_probability, gaussian_packet, joint_prob_mixed, model_decoherence, record_conditionals,
};

/// Overrides applied on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: Option<OutputFormat>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
}

/// Summary of one run. Everything except the wall time goes to `<name>.summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub kind: String,
    pub seed: u64,
    pub format: OutputFormat,
    pub tolerance: f64,
    #[serde(skip)]
    pub wall_time: Duration,
    pub defects: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, bool>,
    /// File names relative to the output directory, summary last.
    pub outputs: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

impl RunReport {
    pub fn summary_json(&self) -> Result<Vec<u8>> {
        to_json_bytes(self)
    }

    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|v| *v)
    }
}

/// Results held in memory before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub table: Table,
    /// Extra `(file name, bytes)` beyond the main table.
    pub extra: Vec<(String, Vec<u8>)>,
}

struct Collector {
    report: RunReport,
    table: Table,
    extra: Vec<(String, Vec<u8>)>,
}

impl Collector {
    fn defect(&mut self, key: &str, v: f64) {
        self.report.defects.insert(key.into(), v);
    }
    fn value(&mut self, key: &str, v: f64) {
        self.report.values.insert(key.into(), v);
    }
    fn verdict(&mut self, key: &str, v: bool) {
        self.report.verdicts.insert(key.into(), v);
    }
    fn meta(&mut self, key: &str, v: impl Into<String>) {
        self.report.metadata.insert(key.into(), v.into());
    }
}

/// Runs the scenario without touching the file system.
pub fn compute(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    scenario.validate()?;
    let start = Instant::now();
    let seed = options.seed.unwrap_or(scenario.seed);
    let tolerance = options.tolerance.unwrap_or(scenario.tolerance.decoherence);
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::validation("tolerance", format!("must be positive, got {tolerance}")));
    }
    let mut col = Collector {
        report: RunReport {
            scenario: scenario.name.clone(),
            kind: scenario.kind.as_str().into(),
            seed,
            format: options.format.unwrap_or(scenario.format),
            tolerance,
            wall_time: Duration::ZERO,
            defects: BTreeMap::new(),
            values: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            outputs: Vec::new(),
            metadata: BTreeMap::new(),
        },
        table: Table::new(&[]),
        extra: Vec::new(),
    };
    col.meta("version", env!("CARGO_PKG_VERSION"));
    match scenario.kind {
        ScenarioKind::TwoState => two_state(scenario, tolerance, &mut col)?,
        ScenarioKind::Kernels => kernels(scenario, &mut col)?,
        ScenarioKind::QbmFourier => qbm_fourier(scenario, seed, tolerance, &mut col)?,
        ScenarioKind::QbmRecords => qbm_records(scenario, seed, tolerance, &mut col)?,
        ScenarioKind::InfoCount => info_count(scenario, &mut col)?,
        ScenarioKind::GenericHistories => generic_histories(scenario, seed, tolerance, &mut col)?,
    }
    let name = &scenario.name;
    let mut outputs = vec![format!("{name}.{}", col.report.format.extension())];
    outputs.extend(col.extra.iter().map(|(f, _)| f.clone()));
    outputs.push(format!("{name}.summary.json"));
    col.report.outputs = outputs;
    col.report.wall_time = start.elapsed();
    Ok(RunOutput {
        report: col.report,
        table: col.table,
        extra: col.extra,
    })
}

/// Runs the scenario and writes every output atomically into `options.out_dir`.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunReport> {
    let out = compute(scenario, options)?;
    let dir = &options.out_dir;
    let main = match out.report.format {
        OutputFormat::Csv => out.table.to_csv()?,
        OutputFormat::Json => out.table.to_json()?,
    };
    write_atomic(&dir.join(&out.report.outputs[0]), &main)?;
    for (file, bytes) in &out.extra {
        write_atomic(&dir.join(file), bytes)?;
    }
    let summary = out.report.outputs.last().expect("summary listed");
    write_atomic(&dir.join(summary), &out.report.summary_json()?)?;
    Ok(out.report)
}

fn decoherence_file(name: &str, d: &DecoherenceMatrix) -> Result<(String, Vec<u8>)> {
    Ok((format!("{name}.decoherence.json"), to_json_bytes(&d.to_json())?))
}

fn two_state(s: &Scenario, tolerance: f64, col: &mut Collector) -> Result<()> {
    let cfg = s.two_state.clone().expect("validated");
    let (center, width, momentum) = match s.packet {
        Some(p) => (p.center, p.width, p.momentum),
        None => (0.5 * (cfg.region_a + cfg.region_b), 0.5 * (cfg.region_b - cfg.region_a), 0.0),
    };
    let psi = gaussian_packet(&cfg, center, width, momentum).map_err(|e| keyed("packet", e))?;
    let model = build_model(&cfg)?;
    let d = model_decoherence(&model, &psi)?.with_tolerance(tolerance);
    let probs = probabilities(&d);
    let joint = joint_prob_mixed(&model, &psi)?;
    let cond = record_conditionals(&joint);

    col.table = Table::new(&["alpha1", "alpha2", "beta", "probability"]);
    for e in &joint {
        col.table.push(vec![e.alpha1.as_str().into(), e.alpha2.as_str().into(), e.beta.into(), e.probability.into()]);
    }
    let defect = decoherence_defect(&d);
    col.defect("decoherence_defect", defect);
    col.defect("consistency_defect", consistency_defect(&d));
    col.defect("sum_rule_defect", probs.sum_rule_defect);
    col.defect("hermiticity_defect", d.hermiticity_defect());
    let best: Vec<f64> = cond.values().map(|[p0, p1]| p0.max(*p1)).collect();
    for (label, [p0, p1]) in &cond {
        col.value(&format!("max_conditional_record_probability.{label}"), p0.max(*p1));
    }
    col.value("max_conditional_record_probability", best.iter().copied().fold(f64::INFINITY, f64::min));
    col.value("detection_probability", detection_probability(&psi, &cfg)?);
    col.value("window_weight", model.window.weight(psi.amplitudes()));
    col.value("total_probability", probs.total());
    col.verdict("decoherent", d.is_decoherent());
    col.meta("environment_weights", format!("{:?}", cfg.weights));
    col.meta("packet", format!("center={center:?} width={width:?} momentum={momentum:?}"));
    col.extra.push(decoherence_file(&s.name, &d)?);
    Ok(())
}

fn kernels(s: &Scenario, col: &mut Collector) -> Result<()> {
    let bath = s.bath.as_ref().expect("validated");
    let density = bath.spectral_density(None)?;
    let rows = kernel_table(&density, &s.kernels.expect("validated").lags())?;
    col.table = Table::new(&["s", "eta", "nu", "gamma"]);
    for r in &rows {
        col.table.push(vec![r.s.into(), r.eta.into(), r.nu.into(), r.gamma.into()]);
    }
    if let SpectralDensity::Ohmic { m_gamma, cutoff, .. } = density {
        let gamma0 = m_gamma * cutoff / (2.0 * std::f64::consts::PI.sqrt());
        col.value("gamma_at_zero_expected", gamma0);
        if let Some(r) = rows.iter().find(|r| r.s == 0.0) {
            col.defect("gamma_at_zero", (r.gamma - gamma0).abs());
        }
        col.meta("nu_quadrature", "adaptive G7-K15 on [0, 40 cutoff], rel 1e-8");
        col.meta("spectral_density", "I(omega) = M gamma omega exp(-omega^2/cutoff^2)");
    } else {
        col.meta("spectral_density", "discrete modes");
    }
    col.value("temperature", bath.temperature);
    Ok(())
}

fn random_pairs(s: &Scenario, seed: u64) -> Result<Vec<(crate::kernels::DiscretizedPath, crate::kernels::DiscretizedPath)>> {
    let q = s.qbm.as_ref().expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..q.pairs)
        .map(|_| {
            Ok((
                random_smooth_path(&mut rng, q.tau, q.grid, q.path_amplitude)?,
                random_smooth_path(&mut rng, q.tau, q.grid, q.path_amplitude)?,
            ))
        })
        .collect()
}

fn qbm_fourier(s: &Scenario, seed: u64, tolerance: f64, col: &mut Collector) -> Result<()> {
    let q = s.qbm.as_ref().expect("validated");
    let bath = s.bath.as_ref().expect("validated").oscillator_bath(Some(q.tau))?;
    col.table = Table::new(&[
        "pair", "mode", "omega", "x_s", "x_c", "y_s", "y_c", "im_w", "exponent", "suppression", "decoherent",
    ]);
    let mut worst_identity: f64 = 0.0;
    let mut worst_suppression: f64 = 0.0;
    let mut all_satisfied = true;
    for (p, (x, y)) in random_pairs(s, seed)?.iter().enumerate() {
        let (fx, fy) = (fourier_modes_all(x, &bath), fourier_modes_all(y, &bath));
        let total = im_w_fourier(&fx, &fy, &bath)?;
        let direct = influence_phase(x, y, &bath)?.im;
        worst_identity = worst_identity.max((total - direct).abs() / direct.abs().max(f64::MIN_POSITIVE));
        for (n, mode) in bath.modes.iter().enumerate() {
            let single = OscillatorBath::single(*mode, bath.temperature, bath.hbar)?;
            let im_w = im_w_fourier(&fx[n..=n], &fy[n..=n], &single)?;
            let mut row: Vec<Cell> = vec![
                p.into(),
                n.into(),
                mode.omega.into(),
                fx[n].x_s.into(),
                fx[n].x_c.into(),
                fy[n].x_s.into(),
                fy[n].x_c.into(),
                im_w.into(),
            ];
            match q.width_for(n) {
                Some(delta) => {
                    let c = decoherence_condition(mode, bath.temperature, delta, bath.hbar, q.threshold)?;
                    worst_suppression = worst_suppression.max(c.adjacent_suppression);
                    all_satisfied &= c.satisfied;
                    row.extend([c.exponent.into(), c.adjacent_suppression.into(), c.satisfied.into()]);
                }
                None => row.extend([Cell::from(""), "".into(), "".into()]),
            }
            col.table.push(row);
        }
    }
    col.defect("im_w_identity_relative", worst_identity);
    col.verdict("im_w_identity", worst_identity <= tolerance.max(1e-9));
    if !q.widths.is_empty() {
        col.value("max_adjacent_suppression", worst_suppression);
        col.verdict("decoherence_condition", all_satisfied);
    }
    col.value("threshold", q.threshold);
    col.meta("paths", "offset + drift + four Fourier terms from ChaCha8 seeded by `seed`");
    col.meta("suppression", "exp(-exponent/4) between adjacent cells");
    Ok(())
}

fn qbm_records(s: &Scenario, seed: u64, tolerance: f64, col: &mut Collector) -> Result<()> {
    let q = s.qbm.as_ref().expect("validated");
    let bath = s.bath.as_ref().expect("validated").oscillator_bath(Some(q.tau))?;
    let win = q.window.expect("validated");
    let (t, hbar) = (bath.temperature, bath.hbar);
    col.table = Table::new(&[
        "pair",
        "mode",
        "omega",
        "x_s",
        "x_c",
        "history_width",
        "record_width",
        "printed_history_width",
        "printed_record_width",
        "trace_x",
        "trace_y",
        "diagonal_defect",
        "identity_defect",
    ]);
    let (mut worst_diag, mut worst_ident, mut min_own): (f64, f64, f64) = (0.0, 0.0, 1.0);
    for (p, (x, y)) in random_pairs(s, seed)?.iter().enumerate() {
        for (n, mode) in bath.modes.iter().enumerate() {
            let g = GeneralizedInfluence::new(x, y, mode, t, hbar)?;
            let single = OscillatorBath::single(*mode, t, hbar)?;
            let w = influence_phase(x, y, &single)?;
            let standard = (Complex64::i() * w / hbar).exp();
            let diag = (g.diagonal_integral() - standard).norm();
            let wt = mode.omega * q.tau;
            let (fx, cx) = (g.modes_x, g.coeff_x);
            let ident = (cx.d / cx.b + mode.coupling / (mode.mass * mode.omega) * fx.x_s)
                .abs()
                .max((cx.c + wt.cos() * cx.d - mode.coupling * fx.x_c).abs());
            let widths = gaussian_widths(mode, t, hbar)?;
            let ((mq, _), (mp, _)) = displaced_marginals(mode, t, hbar, fx.x_s, fx.x_c);
            let h = win.half_width;
            let window = match win.kind {
                WindowKind::Position => RecordWindow::Position { lo: mq - h, hi: mq + h },
                WindowKind::Momentum => RecordWindow::Momentum { lo: mp - h, hi: mp + h },
                WindowKind::PhaseSpace => {
                    let hp = win.momentum_half_width.expect("validated");
                    RecordWindow::PhaseSpace {
                        q_lo: mq - h,
                        q_hi: mq + h,
                        p_lo: mp - hp,
                        p_hi: mp + hp,
                    }
                }
            };
            let trace_x = record_trace_factor(&window, mode, t, hbar, fx.x_s, fx.x_c)?;
            let trace_y = record_trace_factor(&window, mode, t, hbar, g.modes_y.x_s, g.modes_y.x_c)?;
            worst_diag = worst_diag.max(diag);
            worst_ident = worst_ident.max(ident);
            min_own = min_own.min(trace_x);
            col.table.push(vec![
                p.into(),
                n.into(),
                mode.omega.into(),
                fx.x_s.into(),
                fx.x_c.into(),
                widths.history_width.into(),
                widths.record_width.into(),
                widths.printed_history_width.into(),
                widths.printed_record_width.into(),
                trace_x.into(),
                trace_y.into(),
                diag.into(),
                ident.into(),
            ]);
        }
    }
    col.defect("diagonal_integral", worst_diag);
    col.defect("propagator_identities", worst_ident);
    col.value("min_own_record_trace", min_own);
    col.verdict("diagonal_integral", worst_diag <= tolerance.max(1e-8));
    col.verdict("propagator_identities", worst_ident <= 1e-10);
    col.meta("widths", WIDTH_DISCREPANCY_NOTE);
    col.meta("window", "centered on the record expected for the first path of each pair");
    Ok(())
}

fn info_count(s: &Scenario, col: &mut Collector) -> Result<()> {
    let bath = s.bath.as_ref().expect("validated");
    let info = s.info.as_ref().expect("validated");
    let modes = bath.bath_modes(Some(info.tau))?;
    let temps = if info.temperatures.is_empty() {
        vec![bath.temperature]
    } else {
        info.temperatures.clone()
    };
    col.table = Table::new(&[
        "mode",
        "omega",
        "temperature",
        "n_d_max",
        "n_env",
        "ratio",
        "entropy",
        "exp_entropy",
        "high_t_ratio",
        "history_count",
    ]);
    let histories = history_count(info.box_length, info.tau, info.delta);
    let mut identity = true;
    for &t in &temps {
        for (n, mode) in modes.iter().enumerate() {
            let c = info_counts(mode, t, info.box_length, info.tau, bath.hbar)?;
            identity &= c.ratio * c.n_env == c.n_d_max;
            col.table.push(vec![
                n.into(),
                mode.omega.into(),
                t.into(),
                c.n_d_max.into(),
                c.n_env.into(),
                c.ratio.into(),
                c.entropy.into(),
                c.exp_entropy.into(),
                c.high_t_ratio.into(),
                histories.into(),
            ]);
        }
    }
    col.verdict("ratio_identity", identity);
    col.value("history_count", histories);
    col.meta("history_count", "(L tau / Delta)^2 with proportionality constant 1");
    col.meta("high_temperature", HIGH_T_NOTE);
    Ok(())
}

#[allow(clippy::needless_range_loop)]
fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let v = rng.random_range(-1.0..1.0);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

fn generic_histories(s: &Scenario, seed: u64, tolerance: f64, col: &mut Collector) -> Result<()> {
    let cfg = s.histories.as_ref().expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = if cfg.hamiltonian.is_empty() {
        random_symmetric(&mut rng, cfg.dim)
    } else {
        cfg.hamiltonian.clone()
    };
    let h = ComplexOperator::new(CMatrix::from_fn(cfg.dim, cfg.dim, |i, j| Complex64::new(rows[i][j], 0.0)))
        .map_err(|e| keyed("histories.hamiltonian", e))?;
    let amps: Vec<Complex64> = if cfg.state.is_empty() {
        (0..cfg.dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    } else {
        cfg.state.iter().map(|&a| Complex64::new(a, 0.0)).collect()
    };
    let psi = PureState::normalized(crate::hilbert::Ket::from_vec(amps)).map_err(|e| keyed("histories.state", e))?;
    let basis = match cfg.basis {
        BasisChoice::Computational => CMatrix::identity(cfg.dim, cfg.dim),
        BasisChoice::Energy => hermitian_eigen(&h)?.1,
    };
    let labels: Vec<String> = (0..cfg.groups.len()).map(|k| format!("g{k}")).collect();
    let family = ProjectorFamily::from_basis_groups(&basis, &cfg.groups, labels).map_err(|e| keyed("histories.groups", e))?;
    let spec = HistorySpec::new(h, cfg.times.clone(), vec![family; cfg.times.len()], cfg.hbar)
        .map_err(|e| keyed("histories", e))?;
    let d = decoherence_matrix_pure(&spec, &psi)?.with_tolerance(tolerance);
    let probs = probabilities(&d);
    col.table = Table::new(&["alpha", "alpha_prime", "re", "im"]);
    for a in d.histories() {
        for b in d.histories() {
            let z = d.get(a, b).expect("listed history");
            col.table.push(vec![a.to_string().into(), b.to_string().into(), z.re.into(), z.im.into()]);
        }
    }
    col.defect("decoherence_defect", decoherence_defect(&d));
    col.defect("consistency_defect", consistency_defect(&d));
    col.defect("sum_rule_defect", probs.sum_rule_defect);
    col.value("total_probability", probs.total());
    col.verdict("decoherent", d.is_decoherent());
    col.verdict("consistent", d.is_consistent());
    col.meta("basis", format!("{:?}", cfg.basis).to_lowercase());
    col.extra.push(decoherence_file(&s.name, &d)?);
    Ok(())
}
