//! Channel-with-memory dynamics for a qubit probed by Pauli controls.
//!
//! Stored states live on `S ⊗ E₂` (system first). The joint evolution `V`
//! acts on `S ⊗ E₂ ⊗ E₁`; the Markovian environment `E₁` is prepared in its
//! first basis vector before every step and traced out afterwards.

use std::fmt;

use crate::error::{Error, Result};
use crate::quantum::{
    kron, sample_evolution_unitary, sample_ginibre_density, ComplexMatrix, DensityMatrix, Rng,
    UnitaryMatrix, C64,
};

pub const SYSTEM_DIM: usize = 2;
pub const TIME_STEPS: usize = 4;
/// Control unitaries per time step: 𝟙, σx, σy, σz.
pub const N_CONTROLS: usize = 4;
/// Final measurement bases: |x+⟩, |y+⟩, |z+⟩.
pub const N_BASES: usize = 3;
pub const N_CONTROL_STEPS: usize = TIME_STEPS - 1;
/// `4^(n−1) × 3`.
pub const N_FEATURES: usize = N_CONTROLS * N_CONTROLS * N_CONTROLS * N_BASES;

/// Slack tolerated before a probability outside `[0, 1]` counts as a
/// numerical failure rather than rounding noise.
const PROBABILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessParams {
    pub d: usize,
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    pub phi: f64,
}

impl ProcessParams {
    pub fn new(k1: usize, k2: usize, phi: f64) -> Result<Self> {
        let p = Self {
            d: SYSTEM_DIM,
            n: TIME_STEPS,
            k1,
            k2,
            phi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != SYSTEM_DIM || self.n != TIME_STEPS {
            return Err(Error::Parameter(format!(
                "only d={SYSTEM_DIM}, n={TIME_STEPS} is supported, got d={}, n={}",
                self.d, self.n
            )));
        }
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::Parameter(format!(
                "environment dimensions must be >= 1, got k1={}, k2={}",
                self.k1, self.k2
            )));
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::Parameter(format!(
                "phi must lie in [0, 1], got {}",
                self.phi
            )));
        }
        Ok(())
    }

    /// Dimension of stored states, `d·k2`.
    pub fn state_dim(&self) -> usize {
        self.d * self.k2
    }

    /// Dimension of the joint evolution, `d·k2·k1`.
    pub fn joint_dim(&self) -> usize {
        self.d * self.k2 * self.k1
    }
}

/// One sampled process: a fixed joint unitary reused at every step and an
/// initial `S ⊗ E₂` state.
#[derive(Debug, Clone)]
pub struct ProcessInstance {
    params: ProcessParams,
    evolution: UnitaryMatrix,
    initial_state: DensityMatrix,
    /// `K_{u,e} = ⟨e|_{E₁} V |0⟩_{E₁} (U_u ⊗ 𝟙)`, indexed `[u][e]`.
    kraus: Vec<Vec<ComplexMatrix>>,
}

impl ProcessInstance {
    pub fn new(
        params: ProcessParams,
        evolution: UnitaryMatrix,
        initial_state: DensityMatrix,
    ) -> Result<Self> {
        params.validate()?;
        if evolution.dim() != params.joint_dim() {
            return Err(Error::Dimension(format!(
                "evolution has dim {}, expected d*k2*k1 = {}",
                evolution.dim(),
                params.joint_dim()
            )));
        }
        let initial_state = initial_state.reshape_dims(vec![params.d, params.k2])?;
        let kraus = build_kraus(&params, evolution.matrix());
        Ok(Self {
            params,
            evolution,
            initial_state,
            kraus,
        })
    }

    /// Fresh `V` (evolution-parameter construction) and Ginibre `ρ₀`.
    pub fn sample(params: ProcessParams, rng: &mut Rng) -> Result<Self> {
        params.validate()?;
        let evolution = sample_evolution_unitary(params.joint_dim(), params.phi, rng)?;
        let rho0 = sample_ginibre_density(params.state_dim(), rng);
        Self::new(params, evolution, rho0)
    }

    pub fn params(&self) -> &ProcessParams {
        &self.params
    }

    pub fn evolution(&self) -> &UnitaryMatrix {
        &self.evolution
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    fn apply(&self, rho: &ComplexMatrix, u_index: usize) -> ComplexMatrix {
        let mut ops = self.kraus[u_index].iter();
        let first = ops.next().expect("k1 >= 1");
        let mut out = rho.sandwich(first);
        for k in ops {
            out.add_assign(&rho.sandwich(k));
        }
        out
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dims() != [self.params.d, self.params.k2] {
            return Err(Error::Dimension(format!(
                "state dims {:?} do not match process S⊗E2 dims [{}, {}]",
                rho.dims(),
                self.params.d,
                self.params.k2
            )));
        }
        Ok(())
    }
}

fn build_kraus(params: &ProcessParams, v: &ComplexMatrix) -> Vec<Vec<ComplexMatrix>> {
    let (sd, k1) = (params.state_dim(), params.k1);
    let id_env = ComplexMatrix::identity(params.k2);
    let controls: Vec<ComplexMatrix> = (0..N_CONTROLS)
        .map(|u| kron(&pauli(u).expect("index in range"), &id_env))
        .collect();
    let blocks: Vec<ComplexMatrix> = (0..k1)
        .map(|e| ComplexMatrix::from_fn(sd, sd, |a, b| v[(a * k1 + e, b * k1)]))
        .collect();
    controls
        .iter()
        .map(|c| blocks.iter().map(|k| k.matmul(c)).collect())
        .collect()
}

/// Pauli control `U_0 = 𝟙, U_1 = σx, U_2 = σy, U_3 = σz`.
pub fn pauli(index: usize) -> Result<ComplexMatrix> {
    let (o, l, i) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0));
    let entries = match index {
        0 => vec![l, o, o, l],
        1 => vec![o, l, l, o],
        2 => vec![o, -i, i, o],
        3 => vec![l, o, o, -l],
        _ => {
            return Err(Error::Parameter(format!(
                "control index must be in 0..=3, got {index}"
            )))
        }
    };
    ComplexMatrix::from_vec(2, 2, entries)
}

/// Measurement state `|ψ_1⟩ = |x+⟩, |ψ_2⟩ = |y+⟩, |ψ_3⟩ = |z+⟩`.
pub fn basis_state(index: usize) -> Result<[C64; 2]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match index {
        1 => Ok([C64::new(h, 0.0), C64::new(h, 0.0)]),
        2 => Ok([C64::new(h, 0.0), C64::new(0.0, h)]),
        3 => Ok([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
        _ => Err(Error::Parameter(format!(
            "measurement basis index must be in 1..=3, got {index}"
        ))),
    }
}

/// Unitary controls `(i₁, i₂, i₃)` and final measurement basis `i_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ControlSequence {
    unitaries: [u8; N_CONTROL_STEPS],
    basis: u8,
}

impl ControlSequence {
    pub fn new(unitaries: [u8; N_CONTROL_STEPS], basis: u8) -> Result<Self> {
        if unitaries.iter().any(|&u| u as usize >= N_CONTROLS) {
            return Err(Error::Parameter(format!(
                "control indices must be in 0..=3, got {unitaries:?}"
            )));
        }
        if !(1..=N_BASES as u8).contains(&basis) {
            return Err(Error::Parameter(format!(
                "measurement basis must be in 1..=3, got {basis}"
            )));
        }
        Ok(Self { unitaries, basis })
    }

    pub fn unitaries(&self) -> [u8; N_CONTROL_STEPS] {
        self.unitaries
    }

    pub fn basis(&self) -> u8 {
        self.basis
    }

    /// Column position: lexicographic in `(i₁, i₂, i₃, i_n)`, `i_n` fastest.
    pub fn feature_index(&self) -> usize {
        let prefix = self
            .unitaries
            .iter()
            .fold(0usize, |acc, &u| acc * N_CONTROLS + u as usize);
        prefix * N_BASES + (self.basis as usize - 1)
    }

    pub fn from_feature_index(index: usize) -> Result<Self> {
        if index >= N_FEATURES {
            return Err(Error::Parameter(format!(
                "feature index {index} out of range 0..{N_FEATURES}"
            )));
        }
        let basis = (index % N_BASES) as u8 + 1;
        let mut prefix = index / N_BASES;
        let mut unitaries = [0u8; N_CONTROL_STEPS];
        for slot in unitaries.iter_mut().rev() {
            *slot = (prefix % N_CONTROLS) as u8;
            prefix /= N_CONTROLS;
        }
        Self::new(unitaries, basis)
    }

    /// All sequences in feature-column order.
    pub fn all() -> impl Iterator<Item = ControlSequence> {
        (0..N_FEATURES).map(|i| Self::from_feature_index(i).expect("index in range"))
    }
}

impl fmt::Display for ControlSequence {
    /// Digit string `i₁i₂i₃i_n`, e.g. `0001`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for u in self.unitaries {
            write!(f, "{u}")?;
        }
        write!(f, "{}", self.basis)
    }
}

/// One step of the recursive map: control, dilation with `|0⟩⟨0|_{E₁}`,
/// joint evolution, trace over `E₁`.
pub fn step(rho: &DensityMatrix, u_index: usize, inst: &ProcessInstance) -> Result<DensityMatrix> {
    inst.check_state(rho)?;
    pauli(u_index)?;
    let out = inst.apply(rho.matrix(), u_index);
    DensityMatrix::with_dims(out, rho.dims().to_vec())
}

/// Same map as [`step`], computed literally on the full `S ⊗ E₂ ⊗ E₁` space.
/// Slow; kept as a reference path.
pub fn step_dilated(
    rho: &DensityMatrix,
    u_index: usize,
    inst: &ProcessInstance,
) -> Result<DensityMatrix> {
    inst.check_state(rho)?;
    let p = inst.params();
    let control = UnitaryMatrix::new(kron(&pauli(u_index)?, &ComplexMatrix::identity(p.k2)))?;
    let controlled = control.conjugate(rho)?;
    let mut fiducial = vec![C64::new(0.0, 0.0); p.k1];
    fiducial[0] = C64::new(1.0, 0.0);
    let env = DensityMatrix::pure(&fiducial)?;
    let joint = inst.evolution().conjugate(&controlled.tensor(&env))?;
    joint.partial_trace(&[0, 1])
}

/// `⟨ψ| tr_{E₂} ρ |ψ⟩` for the basis `1 = x+, 2 = y+, 3 = z+`.
pub fn measure_probability(rho: &DensityMatrix, basis_index: usize) -> Result<f64> {
    let psi = basis_state(basis_index)?;
    if rho.dims().len() != 2 || rho.dims()[0] != SYSTEM_DIM {
        return Err(Error::Dimension(format!(
            "expected S⊗E2 state with dims [2, k2], got {:?}",
            rho.dims()
        )));
    }
    probability(rho.matrix(), rho.dims()[1], &psi)
}

fn probability(rho: &ComplexMatrix, k2: usize, psi: &[C64; 2]) -> Result<f64> {
    let mut p = 0.0;
    for a in 0..SYSTEM_DIM {
        for b in 0..SYSTEM_DIM {
            let reduced: C64 = (0..k2).map(|e| rho[(a * k2 + e, b * k2 + e)]).sum();
            p += (psi[a].conj() * reduced * psi[b]).re;
        }
    }
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
        return Err(Error::Numerical(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Evaluation path for [`generate_features_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureStrategy {
    /// Shares states along the prefix tree of control sequences
    /// (4 + 16 + 64 = 84 channel applications).
    #[default]
    PrefixTree,
    /// Recomputes every sequence from `ρ₀` with [`step_dilated`].
    Naive,
}

/// The 192 final-measurement probabilities in feature-column order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, seq: ControlSequence) -> f64 {
        self.0[seq.feature_index()]
    }
}

pub fn generate_features(inst: &ProcessInstance) -> Result<FeatureVector> {
    generate_features_with(inst, FeatureStrategy::PrefixTree)
}

pub fn generate_features_with(
    inst: &ProcessInstance,
    strategy: FeatureStrategy,
) -> Result<FeatureVector> {
    match strategy {
        FeatureStrategy::PrefixTree => prefix_tree_features(inst),
        FeatureStrategy::Naive => naive_features(inst),
    }
}

fn prefix_tree_features(inst: &ProcessInstance) -> Result<FeatureVector> {
    let k2 = inst.params.k2;
    let bases: Vec<[C64; 2]> = (1..=N_BASES)
        .map(|b| basis_state(b).expect("valid"))
        .collect();
    let mut out = Vec::with_capacity(N_FEATURES);
    let rho0 = inst.initial_state.matrix();
    for u1 in 0..N_CONTROLS {
        let s1 = inst.apply(rho0, u1);
        for u2 in 0..N_CONTROLS {
            let s2 = inst.apply(&s1, u2);
            for u3 in 0..N_CONTROLS {
                let s3 = inst.apply(&s2, u3);
                for psi in &bases {
                    out.push(probability(&s3, k2, psi)?);
                }
            }
        }
    }
    Ok(FeatureVector(out))
}

fn naive_features(inst: &ProcessInstance) -> Result<FeatureVector> {
    let mut out = Vec::with_capacity(N_FEATURES);
    for seq in ControlSequence::all() {
        let mut rho = inst.initial_state.clone();
        for u in seq.unitaries() {
            rho = step_dilated(&rho, u as usize, inst)?;
        }
        out.push(measure_probability(&rho, seq.basis() as usize)?);
    }
    Ok(FeatureVector(out))
}
