//! A particle on a periodic grid kicked once by a two-level detector.
//!
//! The composite space is `particle (x) detector` with the detector index
//! running fastest. The detector starts in `|0>` (or the mixture
//! `a|0><0| + b|1><1|`) and flips when the particle sits inside the window
//! at the kick time. The first history label is `n` (outside) or `y`
//! (inside); the second is a position bin at the final time.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{c, tensor, tensor_ket, CMatrix, ComplexOperator, DensityOperator, Ket, ProjectorFamily, PureState};
use crate::histories::{
    decoherence_matrix, joint_probability, HistoryIndex, HistorySpec, JointProbability, RecordProjectorSet,
};

/// Label index of the "outside the window" alternative at the kick.
pub const ALPHA1_N: usize = 0;
/// Label index of the "inside the window" alternative at the kick.
pub const ALPHA1_Y: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStateModelConfig {
    pub grid_points: usize,
    pub box_length: f64,
    pub mass: f64,
    pub t1: f64,
    pub t_final: f64,
    pub region_a: f64,
    pub region_b: f64,
    /// Coupling in units of hbar; `pi/2` is the ideal detector.
    #[serde(default = "default_lambda_over_hbar")]
    pub lambda_over_hbar: f64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    /// `(a, b)` of the environment mixture `a|0><0| + b|1><1|`.
    #[serde(default = "default_weights")]
    pub weights: [f64; 2],
    /// Number of equal position bins used for the final-time alternatives.
    #[serde(default = "default_final_bins")]
    pub final_bins: usize,
}

fn default_lambda_over_hbar() -> f64 {
    PI / 2.0
}

fn default_hbar() -> f64 {
    1.0
}

fn default_weights() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_final_bins() -> usize {
    4
}

impl Default for TwoStateModelConfig {
    /// 64 points on a unit box with the window over the middle quarter.
    fn default() -> Self {
        Self {
            grid_points: 64,
            box_length: 1.0,
            mass: 1.0,
            t1: 0.0,
            t_final: 0.01,
            region_a: 0.375,
            region_b: 0.625,
            lambda_over_hbar: default_lambda_over_hbar(),
            hbar: default_hbar(),
            weights: default_weights(),
            final_bins: default_final_bins(),
        }
    }
}

impl TwoStateModelConfig {
    pub fn dx(&self) -> f64 {
        self.box_length / self.grid_points as f64
    }

    /// Cell center of grid point `j`.
    pub fn cell_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::validation(key, msg));
        if self.grid_points < 2 {
            return bad("grid_points", format!("need at least 2 points, got {}", self.grid_points));
        }
        for (key, v) in [
            ("box_length", self.box_length),
            ("mass", self.mass),
            ("hbar", self.hbar),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(key, format!("must be positive and finite, got {v}"));
            }
        }
        if !(self.t1.is_finite() && self.t_final.is_finite() && self.t_final > self.t1) {
            return bad("t_final", format!("must exceed t1 = {}", self.t1));
        }
        if !(0.0 <= self.region_a && self.region_a < self.region_b && self.region_b <= self.box_length) {
            return bad(
                "region_b",
                format!(
                    "region [{}, {}) must satisfy 0 <= a < b <= {}",
                    self.region_a, self.region_b, self.box_length
                ),
            );
        }
        if self.region_b - self.region_a < self.dx() {
            return bad(
                "region_b",
                format!("region width {} is smaller than one grid cell {}", self.region_b - self.region_a, self.dx()),
            );
        }
        let [a, b] = self.weights;
        if !(a >= 0.0 && b >= 0.0) || (a + b - 1.0).abs() > 1e-12 {
            return bad("weights", format!("need nonnegative weights summing to 1, got [{a}, {b}]"));
        }
        if !self.lambda_over_hbar.is_finite() {
            return bad("lambda_over_hbar", "must be finite".into());
        }
        if self.final_bins == 0 || self.final_bins > self.grid_points {
            return bad(
                "final_bins",
                format!("must lie in 1..={}, got {}", self.grid_points, self.final_bins),
            );
        }
        Ok(())
    }
}

/// Diagonal 0/1 mask of the grid points whose cell centers lie in `[a, b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowProjector {
    mask: Vec<bool>,
}

impl WindowProjector {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    /// Membership by cell center; an interval may miss every center.
    pub fn from_interval(grid_points: usize, box_length: f64, a: f64, b: f64) -> Self {
        let dx = box_length / grid_points as f64;
        let mask = (0..grid_points)
            .map(|j| {
                let x = (j as f64 + 0.5) * dx;
                a <= x && x < b
            })
            .collect();
        Self { mask }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.mask.get(j).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `P_y`.
    pub fn inside(&self) -> ComplexOperator {
        ComplexOperator::from_real_diagonal(&self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect::<Vec<_>>())
    }

    /// `P_n = 1 - P_y`.
    pub fn outside(&self) -> ComplexOperator {
        ComplexOperator::from_real_diagonal(&self.mask.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect::<Vec<_>>())
    }

    /// `{P_n, P_y}` labelled `n`, `y`.
    pub fn family(&self) -> ProjectorFamily {
        let (inside, outside): (Vec<usize>, Vec<usize>) = (0..self.dim()).partition(|&j| self.mask[j]);
        ProjectorFamily::from_index_groups(self.dim(), &[outside, inside], vec!["n".into(), "y".into()])
            .expect("window halves partition the grid")
    }

    /// `sum_{j inside} |psi_j|^2`.
    pub fn weight(&self, psi: &Ket) -> f64 {
        psi.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(z, _)| z.norm_sqr())
            .sum()
    }
}

/// `exp(-i pi s Y / 2) = P_n - i s P_y` on the particle.
pub fn kick_factor(s: i32, mask: &WindowProjector) -> Result<ComplexOperator> {
    if s != 1 && s != -1 {
        return Err(Error::invalid(format!("kick sign must be +1 or -1, got {s}")));
    }
    let diag: Vec<Complex64> = mask
        .mask()
        .iter()
        .map(|&m| if m { c(0.0, -(s as f64)) } else { c(1.0, 0.0) })
        .collect();
    Ok(ComplexOperator::from_matrix_unchecked(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))))
}

/// Composite kick `exp(-i lambda Y (x) sigma_x / hbar)`
/// `= P_n (x) 1 + P_y (x) (cos(l) - i sin(l) sigma_x)` with `l = lambda / hbar`.
pub fn composite_kick(mask: &WindowProjector, lambda_over_hbar: f64) -> ComplexOperator {
    let n = mask.dim();
    let (cs, sn) = (lambda_over_hbar.cos(), lambda_over_hbar.sin());
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let (i0, i1) = (2 * j, 2 * j + 1);
        if mask.contains(j) {
            m[(i0, i0)] = c(cs, 0.0);
            m[(i1, i1)] = c(cs, 0.0);
            m[(i0, i1)] = c(0.0, -sn);
            m[(i1, i0)] = c(0.0, -sn);
        } else {
            m[(i0, i0)] = c(1.0, 0.0);
            m[(i1, i1)] = c(1.0, 0.0);
        }
    }
    ComplexOperator::from_matrix_unchecked(m)
}

/// Unitary DFT on `n` points, `F[k][j] = exp(-2 pi i k j / n) / sqrt(n)`.
fn dft(n: usize) -> CMatrix {
    let norm = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, j| {
        let phase = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
        Complex64::from_polar(norm, phase)
    })
}

/// Grid wave numbers in DFT order, folded into `(-n/2, n/2]`.
pub fn wave_numbers(n: usize, box_length: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * signed / box_length
        })
        .collect()
}

fn diagonal_in_momentum(n: usize, values: impl Fn(f64) -> Complex64, box_length: f64) -> CMatrix {
    let f = dft(n);
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        wave_numbers(n, box_length).into_iter().map(values),
    ));
    f.adjoint() * d * f
}

/// `p^2 / 2m` on the periodic grid through the discrete momentum basis.
pub fn free_hamiltonian(config: &TwoStateModelConfig) -> ComplexOperator {
    let (hbar, m) = (config.hbar, config.mass);
    let h = diagonal_in_momentum(config.grid_points, |k| c(hbar * hbar * k * k / (2.0 * m), 0.0), config.box_length);
    ComplexOperator::from_matrix_unchecked(h).hermitian_part()
}

/// `exp(-i H0 t / hbar)` built directly in the momentum basis.
pub fn free_propagator(config: &TwoStateModelConfig, t: f64) -> ComplexOperator {
    let (hbar, m) = (config.hbar, config.mass);
    let u = diagonal_in_momentum(
        config.grid_points,
        |k| Complex64::from_polar(1.0, -hbar * k * k * t / (2.0 * m)),
        config.box_length,
    );
    ComplexOperator::from_matrix_unchecked(u)
}

/// Equal position bins (as equal as the grid allows), labelled `bin0`, `bin1`, ...
pub fn position_bins(grid_points: usize, bins: usize) -> Result<ProjectorFamily> {
    if bins == 0 || bins > grid_points {
        return Err(Error::invalid(format!("{bins} bins on {grid_points} points")));
    }
    let groups: Vec<Vec<usize>> = (0..bins)
        .map(|b| (0..grid_points).filter(|&j| j * bins / grid_points == b).collect())
        .collect();
    ProjectorFamily::from_index_groups(grid_points, &groups, (0..bins).map(|b| format!("bin{b}")).collect())
}

/// Normalized Gaussian packet sampled at the cell centers.
pub fn gaussian_packet(config: &TwoStateModelConfig, center: f64, width: f64, momentum: f64) -> Result<PureState> {
    if !(width > 0.0) {
        return Err(Error::invalid(format!("packet width must be positive, got {width}")));
    }
    let n = config.grid_points;
    let v = Ket::from_iterator(
        n,
        (0..n).map(|j| {
            let x = config.cell_center(j);
            let env = (-(x - center).powi(2) / (4.0 * width * width)).exp();
            Complex64::from_polar(env, momentum * x / config.hbar)
        }),
    );
    PureState::normalized(v)
}

/// Everything needed to evaluate histories of the kicked particle.
#[derive(Debug, Clone)]
pub struct TwoStateModel {
    pub config: TwoStateModelConfig,
    pub h0: ComplexOperator,
    pub window: WindowProjector,
    /// Free particle evolution from `t1` to `t_final`.
    pub free: ComplexOperator,
    pub final_family: ProjectorFamily,
    pub kick: ComplexOperator,
    pub spec: HistorySpec,
}

pub fn build_model(config: &TwoStateModelConfig) -> Result<TwoStateModel> {
    config.validate()?;
    let n = config.grid_points;
    let window = WindowProjector::from_interval(n, config.box_length, config.region_a, config.region_b);
    let h0 = free_hamiltonian(config);
    let free = free_propagator(config, config.t_final - config.t1);
    let final_family = position_bins(n, config.final_bins)?;
    let kick = composite_kick(&window, config.lambda_over_hbar);
    let id2 = ComplexOperator::identity(2);
    let propagator = tensor(&free, &id2).compose(&kick)?;
    let spec = HistorySpec::with_propagators(
        tensor(&h0, &id2),
        vec![config.t1, config.t_final],
        vec![window.family().extend_with_identity(2), final_family.extend_with_identity(2)],
        config.hbar,
        vec![propagator],
    )?;
    Ok(TwoStateModel {
        config: config.clone(),
        h0,
        window,
        free,
        final_family,
        kick,
        spec,
    })
}

impl TwoStateModel {
    pub fn dim(&self) -> usize {
        self.config.grid_points
    }

    /// `psi (x) |0>`.
    pub fn initial_state(&self, psi: &PureState) -> PureState {
        psi.tensor(&PureState::basis(2, 0).expect("basis state of a qubit"))
    }

    /// `psi psi^dag (x) (a|0><0| + b|1><1|)`.
    pub fn initial_density(&self, psi: &PureState) -> DensityOperator {
        let [a, b] = self.config.weights;
        let env = DensityOperator::diagonal(&[a, b]).expect("validated weights");
        DensityOperator::from_pure(psi).tensor(&env)
    }

    /// Detector records `1 (x) |0><0|` and `1 (x) |1><1|`.
    pub fn records(&self) -> RecordProjectorSet {
        let id = ComplexOperator::identity(self.dim());
        let members = vec![
            tensor(&id, &ComplexOperator::from_real_diagonal(&[1.0, 0.0])),
            tensor(&id, &ComplexOperator::from_real_diagonal(&[0.0, 1.0])),
        ];
        let family = ProjectorFamily::new(members, vec!["0".into(), "1".into()]).expect("detector projectors");
        // the ideal detector stores n in |0> and y in |1>
        let correlation = self
            .spec
            .histories()
            .into_iter()
            .map(|h| {
                let b = if h.0[0] == ALPHA1_Y { 1 } else { 0 };
                (h, b)
            })
            .collect();
        RecordProjectorSet::from_family(family, correlation)
    }

    /// Full kicked evolution `U_free (x) 1 . K` from `t1` to `t_final`.
    pub fn full_evolution(&self) -> ComplexOperator {
        self.spec.propagators()[0].clone()
    }

    /// Particle-only histories with the same families and no detector.
    pub fn bare_spec(&self) -> Result<HistorySpec> {
        HistorySpec::with_propagators(
            self.h0.clone(),
            vec![self.config.t1, self.config.t_final],
            vec![self.window.family(), self.final_family.clone()],
            self.config.hbar,
            vec![self.free.clone()],
        )
    }

    fn check_psi(&self, psi: &PureState) -> Result<()> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "particle state of dim {} on a {}-point grid",
                psi.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// The two detector components `(env 0, env 1)` of `C_alpha (psi (x) |0>)`.
fn branch_components(model: &TwoStateModel, psi: &PureState, alpha1: usize, alpha2: usize) -> Result<(Ket, Ket)> {
    model.check_psi(psi)?;
    if alpha1 > 1 || alpha2 >= model.final_family.len() {
        return Err(Error::invalid(format!("labels ({alpha1}, {alpha2}) out of range")));
    }
    let l = model.config.lambda_over_hbar;
    let p2 = model.final_family.members()[alpha2].matrix();
    let u = model.free.matrix();
    if alpha1 == ALPHA1_N {
        let v = p2 * u * model.window.outside().matrix() * psi.amplitudes();
        let zero = Ket::zeros(v.len());
        Ok((v, zero))
    } else {
        let v = p2 * u * model.window.inside().matrix() * psi.amplitudes();
        Ok((&v * c(l.cos(), 0.0), &v * c(0.0, -l.sin())))
    }
}

/// `C_alpha (psi (x) |0>)` in closed form; not normalized.
pub fn branch_state(model: &TwoStateModel, psi: &PureState, alpha1: usize, alpha2: usize) -> Result<Ket> {
    let (v0, v1) = branch_components(model, psi, alpha1, alpha2)?;
    let e0 = Ket::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
    let e1 = Ket::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]);
    Ok(tensor_ket(&v0, &e0) + tensor_ket(&v1, &e1))
}

/// Probability of finding the detector in `|1>`: `sin^2(lambda/hbar) sum_{[a,b)} |psi|^2`.
pub fn detection_probability(psi: &PureState, config: &TwoStateModelConfig) -> Result<f64> {
    config.validate()?;
    if psi.dim() != config.grid_points {
        return Err(Error::DimensionMismatch("particle state and grid differ".into()));
    }
    let window = WindowProjector::from_interval(config.grid_points, config.box_length, config.region_a, config.region_b);
    Ok(config.lambda_over_hbar.sin().powi(2) * window.weight(psi.amplitudes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointEntry {
    pub alpha1: String,
    pub alpha2: String,
    pub beta: usize,
    pub probability: f64,
}

/// `p(alpha1, alpha2, beta)` for the mixed detector state, from the branch split
/// `|psibar> (x) |0> + |psi> (x) |1>` weighted by `rho_1` and `rho_2`.
pub fn joint_prob_mixed(model: &TwoStateModel, psi: &PureState) -> Result<Vec<JointEntry>> {
    let [a, b] = model.config.weights;
    let rho1 = [a, b];
    let rho2 = [b, a];
    let labels1 = model.window.family().labels().to_vec();
    let labels2 = model.final_family.labels().to_vec();
    let mut out = Vec::new();
    for (alpha1, l1) in labels1.iter().enumerate().take(2) {
        for (alpha2, l2) in labels2.iter().enumerate() {
            let (bar, up) = branch_components(model, psi, alpha1, alpha2)?;
            let (nb, nu) = (bar.norm_squared(), up.norm_squared());
            for beta in 0..2 {
                out.push(JointEntry {
                    alpha1: l1.clone(),
                    alpha2: l2.clone(),
                    beta,
                    probability: nb * rho1[beta] + nu * rho2[beta],
                });
            }
        }
    }
    Ok(out)
}

/// Direct trace `Tr(R_beta C rho C^dag)` over the composite space.
pub fn joint_prob_trace(model: &TwoStateModel, psi: &PureState) -> Result<JointProbability> {
    model.check_psi(psi)?;
    joint_probability(&model.spec, &model.initial_density(psi), &model.records())
}

/// `p(beta | alpha1)` for `beta = 0, 1`, keyed by the `alpha1` label.
pub fn record_conditionals(table: &[JointEntry]) -> BTreeMap<String, [f64; 2]> {
    let mut sums: BTreeMap<String, [f64; 2]> = BTreeMap::new();
    for e in table {
        sums.entry(e.alpha1.clone()).or_default()[e.beta] += e.probability;
    }
    sums.into_iter()
        .filter_map(|(k, [p0, p1])| {
            let total = p0 + p1;
            (total > crate::histories::MIN_BRANCH_WEIGHT).then(|| (k, [p0 / total, p1 / total]))
        })
        .collect()
}

/// `cos(pi/2 (Y(x) - Y(y)))`: 1 for equal membership, 0 otherwise.
pub fn cosine_influence(x_in_region: bool, y_in_region: bool) -> f64 {
    if x_in_region == y_in_region {
        1.0
    } else {
        0.0
    }
}

/// Decoherence matrix of the model for a pure particle state and the configured environment mixture.
pub fn model_decoherence(model: &TwoStateModel, psi: &PureState) -> Result<crate::histories::DecoherenceMatrix> {
    model.check_psi(psi)?;
    decoherence_matrix(&model.spec, &model.initial_density(psi))
}

/// History index `(alpha1, alpha2)`.
pub fn history(alpha1: usize, alpha2: usize) -> HistoryIndex {
    HistoryIndex::new(vec![alpha1, alpha2])
}
