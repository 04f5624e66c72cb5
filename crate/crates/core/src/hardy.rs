//! Hardy's paradox in two-qubit Feynman–Wootters phase space.
//!
//! Each particle is a qubit: q = 0 is the non-overlapping arm, q = 1 the arm
//! shared with the other interferometer. Tables use the composite 2⊗2 layout
//! with rows (q⁺,q⁻) and columns (p⁺,p⁻); the positron is the first factor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::rng::RngStream;
use crate::wigner::{fw_wigner_composite, smoothing_quasiprob, WignerTable};

const FACTORS: [usize; 2] = [2, 2];
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    C,
    D,
}

impl Detector {
    /// Single-particle state that the final beamsplitter sends to this detector.
    fn ket(self) -> [C64; 2] {
        let s = match self {
            Detector::C => 1.0,
            Detector::D => -1.0,
        };
        [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(s * FRAC_1_SQRT_2, 0.0)]
    }
}

/// Which detector fired in each interferometer, written e.g. "CD" for C⁺ and D⁻.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DetectorOutcome {
    pub plus: Detector,
    pub minus: Detector,
}

impl DetectorOutcome {
    pub const ALL: [DetectorOutcome; 4] = [
        DetectorOutcome::new(Detector::C, Detector::C),
        DetectorOutcome::new(Detector::C, Detector::D),
        DetectorOutcome::new(Detector::D, Detector::C),
        DetectorOutcome::new(Detector::D, Detector::D),
    ];

    pub const fn new(plus: Detector, minus: Detector) -> Self {
        Self { plus, minus }
    }

    fn ket(self) -> Vec<C64> {
        let (a, b) = (self.plus.ket(), self.minus.ket());
        a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
    }

    /// Effect operator at time label 2: projector onto the state routed to these detectors.
    pub fn effect(self) -> CMatrix {
        CMatrix::pure_state(&self.ket())
    }

    /// Arms suggested by classical reasoning: a D click on one particle means
    /// the other particle was in the overlapping arm.
    pub fn classical_paths(self) -> (usize, usize) {
        ((self.minus == Detector::D) as usize, (self.plus == Detector::D) as usize)
    }
}

impl fmt::Display for DetectorOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:?}", self.plus, self.minus)
    }
}

impl FromStr for DetectorOutcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let d = |c: char| match c.to_ascii_uppercase() {
            'C' => Ok(Detector::C),
            'D' => Ok(Detector::D),
            _ => Err(Error::InvalidArgument(format!("unknown detector outcome '{s}', expected CC, CD, DC or DD"))),
        };
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "unknown detector outcome '{s}', expected CC, CD, DC or DD"
            )));
        }
        Ok(Self::new(d(chars[0])?, d(chars[1])?))
    }
}

impl TryFrom<String> for DetectorOutcome {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DetectorOutcome> for String {
    fn from(o: DetectorOutcome) -> String {
        o.to_string()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HardyStage {
    pub label: usize,
    pub state: CMatrix,
    pub survival_probability: f64,
}

fn basis_ket(amps: [f64; 4]) -> Vec<C64> {
    amps.iter().map(|&a| C64::new(a, 0.0)).collect()
}

fn beamsplitter() -> CMatrix {
    CMatrix::from_real_rows(&[vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2], vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2]])
        .expect("2×2 beamsplitter")
}

/// State at time label 0 (sources), 1 (after the first beamsplitters) or 2
/// (after post-selecting on no annihilation).
pub fn build_stage(label: usize) -> Result<HardyStage> {
    let psi0 = basis_ket([1.0, 0.0, 0.0, 0.0]);
    let bs = beamsplitter();
    let psi1 = bs.kron(&bs).apply(&psi0);
    match label {
        0 => Ok(HardyStage {
            label,
            state: CMatrix::pure_state(&psi0),
            survival_probability: 1.0,
        }),
        1 => Ok(HardyStage {
            label,
            state: CMatrix::pure_state(&psi1),
            survival_probability: 1.0,
        }),
        2 => {
            // Both particles in the overlapping arms (|1,1⟩) annihilate.
            let mut psi2 = psi1;
            psi2[3] = C64::new(0.0, 0.0);
            let survival: f64 = psi2.iter().map(|z| z.norm_sqr()).sum();
            let norm = survival.sqrt();
            psi2.iter_mut().for_each(|z| *z /= norm);
            Ok(HardyStage {
                label,
                state: CMatrix::pure_state(&psi2),
                survival_probability: survival,
            })
        }
        _ => Err(Error::InvalidArgument(format!("stage label {label} is not 0, 1 or 2"))),
    }
}

pub fn predictive_wigner(stage: &HardyStage) -> Result<WignerTable> {
    fw_wigner_composite(&stage.state, &FACTORS)
}

pub fn retrodictive_wigner(outcome: DetectorOutcome) -> Result<WignerTable> {
    fw_wigner_composite(&outcome.effect(), &FACTORS)
}

/// Sums over (p⁺,p⁻): the distribution over (q⁺,q⁻) in row order.
pub fn position_marginal(t: &WignerTable) -> Vec<f64> {
    t.marginals().0
}

/// Index of the largest entry, as (q⁺,q⁻).
pub fn map_position(marginal: &[f64]) -> (usize, usize) {
    let i = marginal
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (i / 2, i % 2)
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothingResult {
    pub outcome: DetectorOutcome,
    pub table: WignerTable,
    pub position_marginal: Vec<f64>,
    pub map_position: (usize, usize),
}

/// h₂ ∝ f₂·g₂ elementwise, normalized to unit sum.
pub fn smoothing_table(outcome: DetectorOutcome) -> Result<SmoothingResult> {
    let f = predictive_wigner(&build_stage(2)?)?;
    let g = retrodictive_wigner(outcome)?;
    let h = smoothing_quasiprob(&[f], &[g], 1.0)?;
    let table = h.tables.into_iter().next().expect("one table");
    let position_marginal = position_marginal(&table);
    Ok(SmoothingResult {
        outcome,
        map_position: map_position(&position_marginal),
        position_marginal,
        table,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeProbability {
    pub outcome: DetectorOutcome,
    pub given_survival: f64,
    pub joint: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeProbabilities {
    pub annihilation: f64,
    pub outcomes: Vec<OutcomeProbability>,
}

impl OutcomeProbabilities {
    pub fn total(&self) -> f64 {
        self.annihilation + self.outcomes.iter().map(|o| o.joint).sum::<f64>()
    }

    pub fn joint(&self, outcome: DetectorOutcome) -> f64 {
        self.outcomes.iter().find(|o| o.outcome == outcome).map_or(0.0, |o| o.joint)
    }
}

pub fn outcome_probabilities() -> Result<OutcomeProbabilities> {
    let stage = build_stage(2)?;
    let outcomes = DetectorOutcome::ALL
        .iter()
        .map(|&outcome| {
            let given_survival = outcome.effect().trace_product(&stage.state).re;
            OutcomeProbability {
                outcome,
                given_survival,
                joint: given_survival * stage.survival_probability,
            }
        })
        .collect();
    Ok(OutcomeProbabilities {
        annihilation: 1.0 - stage.survival_probability,
        outcomes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParadoxReport {
    pub assertions: Vec<Assertion>,
    /// Negative entries of f₂ as ((q⁺,q⁻,p⁺,p⁻), value).
    pub negative_entries: Vec<([usize; 4], f64)>,
    pub map_paths: Vec<(DetectorOutcome, (usize, usize))>,
}

impl ParadoxReport {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

const TOL: f64 = 1e-12;

/// With a nonnegative predictive table whose (1,1) rows vanish, no elementwise
/// smoothing product can put weight on (1,1). Checked on `trials` random tables.
pub fn classical_lemma_holds(trials: usize, seed: u64) -> bool {
    let mut rng = RngStream::new(seed, 0);
    (0..trials).all(|_| {
        let mut f = [[0.0; 4]; 4];
        let mut g = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                f[r][c] = if r == 3 { 0.0 } else { rng.uniform() };
                g[r][c] = rng.uniform();
            }
        }
        let z: f64 = (0..4).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| f[r][c] * g[r][c]).sum();
        let h11: f64 = (0..4).map(|c| f[3][c] * g[3][c] / z).sum();
        h11 == 0.0
    })
}

pub fn paradox_report() -> Result<ParadoxReport> {
    let f2 = predictive_wigner(&build_stage(2)?)?;
    let fm = position_marginal(&f2);
    let row11 = &f2.values[3];
    let mut assertions = Vec::new();
    assertions.push(Assertion {
        name: "f2 has nonzero (1,1) entries with zero (1,1) marginal".into(),
        passed: fm[3].abs() < TOL && row11.iter().any(|v| v.abs() > TOL),
        detail: format!("marginal {:.3e}, row {:?}", fm[3], row11),
    });
    let dd = smoothing_table(DetectorOutcome::new(Detector::D, Detector::D))?;
    assertions.push(Assertion {
        name: "h2(1,1) = 1 for D+D-".into(),
        passed: (dd.position_marginal[3] - 1.0).abs() < TOL,
        detail: format!("h2(1,1) = {}", dd.position_marginal[3]),
    });
    let trials = 10_000;
    assertions.push(Assertion {
        name: "nonnegative tables cannot be overruled by smoothing".into(),
        passed: classical_lemma_holds(trials, 0x4a7d),
        detail: format!("{trials} random nonnegative tables"),
    });
    let mut map_paths = Vec::new();
    for o in DetectorOutcome::ALL {
        let s = smoothing_table(o)?;
        let want = o.classical_paths();
        assertions.push(Assertion {
            name: format!("MAP path for {o} matches classical reasoning"),
            passed: s.map_position == want,
            detail: format!("MAP {:?}, classical {:?}", s.map_position, want),
        });
        map_paths.push((o, s.map_position));
    }
    let mut negative_entries = Vec::new();
    for (r, row) in f2.values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v < -TOL {
                negative_entries.push(([r / 2, r % 2, c / 2, c % 2], v));
            }
        }
    }
    Ok(ParadoxReport {
        assertions,
        negative_entries,
        map_paths,
    })
}
