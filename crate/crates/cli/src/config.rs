//! Experiment configurations: TOML-loadable grids plus built-in presets.
//!
//! Every experiment is a sweep over parameter grids repeated over seeds.
//! The desk-scale presets finish on a laptop core in minutes; `--paper-scale`
//! restores the published sizes (20 qubits, depth 20, 200 repetitions, or
//! the 6×6 depth-8 grid in 2D), which are long-running and meant for
//! overnight jobs, not CI.

use serde::{Deserialize, Serialize};

/// Which benchmark to run. Kebab-case names double as subcommands and
/// output-file stems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    /// Inverse-circuit accuracy `D(U′∘U, 1)` across noise families and rates.
    MpoInverseSweep,
    /// Correction-channel accuracy `D(E⁻¹∘U, U⁰)` as its bond D′ shrinks.
    NoiseInverseDprime,
    /// Full pipeline on deep circuits: mitigated vs unmitigated states.
    DeepQem,
    /// Output-state error growth with qubit count at fixed depth.
    SizeScaling,
    /// Where mitigation stops paying off as the error rate grows.
    ErrThreshold,
    /// Two-dimensional (PEPO) circuit inversion.
    PepoInverse,
    /// Depth-scaling exponent as a function of qubit count.
    AlphaVsNq,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::MpoInverseSweep,
        ExperimentId::NoiseInverseDprime,
        ExperimentId::DeepQem,
        ExperimentId::SizeScaling,
        ExperimentId::ErrThreshold,
        ExperimentId::PepoInverse,
        ExperimentId::AlphaVsNq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::MpoInverseSweep => "mpo-inverse-sweep",
            ExperimentId::NoiseInverseDprime => "noise-inverse-dprime",
            ExperimentId::DeepQem => "deep-qem",
            ExperimentId::SizeScaling => "size-scaling",
            ExperimentId::ErrThreshold => "err-threshold",
            ExperimentId::PepoInverse => "pepo-inverse",
            ExperimentId::AlphaVsNq => "alpha-vs-nq",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == name)
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One experiment's parameter grids and run controls.
///
/// A TOML file only needs `experiment` plus whatever it wants to override;
/// everything else falls back to the field defaults below (which match the
/// desk-scale presets where the experiments share a meaning for the field).
/// Each experiment reads the subset of grids it sweeps and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Mean two-qubit error rates ε₂ (singles default to ε₂/10).
    #[serde(default = "d_eps_two")]
    pub eps_two: Vec<f64>,
    /// Bond dimensions D for the variational circuit inverse.
    #[serde(default = "d_d_inv")]
    pub d_inv: Vec<usize>,
    /// Bond dimensions D′ for the compressed correction channel.
    #[serde(default = "d_d_prime")]
    pub d_prime: Vec<usize>,
    #[serde(default = "d_n_qubits")]
    pub n_qubits: Vec<usize>,
    #[serde(default = "d_depths")]
    pub depths: Vec<usize>,
    /// Independent circuit samples per parameter point.
    #[serde(default = "d_reps")]
    pub repetitions: usize,
    /// Seed of repetition r is `base_seed + r`; points share seeds so
    /// curves over a grid are paired.
    #[serde(default = "d_seed")]
    pub base_seed: u64,
    /// Rate ε_n of the correlated (all-qubit) depolarizing channel. When
    /// set, the sweep runs each point both without and with it; when
    /// absent, only the local-noise variant runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_rate: Option<f64>,
    /// The global channel fires after every this-many layers.
    #[serde(default = "d_one")]
    pub global_every: usize,
    /// Layers per partition part (d₀) for pipeline experiments.
    #[serde(default = "d_layers_per_part")]
    pub layers_per_part: usize,
    /// Bond cap when compiling noisy parts to MPOs.
    #[serde(default = "d_compile_bond")]
    pub compile_bond: usize,
    /// Mean error rate of the inserted correction gates; absent means
    /// ideal (noiseless) corrections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_eps_one: Option<f64>,
    /// Correction gates err at ε₂/10 of the current grid point instead of
    /// a fixed rate. Mutually exclusive with `correction_eps_one`.
    #[serde(default)]
    pub correction_tracks_eps: bool,
    /// Bond cap for the density-matrix MPS in state simulations.
    #[serde(default = "d_chi_state")]
    pub chi_state: usize,
    /// 2D grid shape for the PEPO experiment.
    #[serde(default = "d_grid")]
    pub grid_rows: usize,
    #[serde(default = "d_grid")]
    pub grid_cols: usize,
    /// Sweep budget for the PEPO inverse.
    #[serde(default = "d_max_sweeps")]
    pub max_sweeps: usize,
    /// Boundary bond χ for evaluating 2D distances; each is reported at
    /// this χ and at 2χ so under-converged contractions are visible.
    #[serde(default = "d_metric_chi")]
    pub metric_chi: usize,
}

fn d_eps_two() -> Vec<f64> {
    vec![1e-2]
}
fn d_d_inv() -> Vec<usize> {
    vec![5]
}
fn d_d_prime() -> Vec<usize> {
    vec![1]
}
fn d_n_qubits() -> Vec<usize> {
    vec![10]
}
fn d_depths() -> Vec<usize> {
    vec![4]
}
fn d_reps() -> usize {
    5
}
fn d_seed() -> u64 {
    1701
}
fn d_one() -> usize {
    1
}
fn d_layers_per_part() -> usize {
    4
}
fn d_compile_bond() -> usize {
    5
}
fn d_chi_state() -> usize {
    64
}
fn d_grid() -> usize {
    3
}
fn d_max_sweeps() -> usize {
    15
}
fn d_metric_chi() -> usize {
    64
}

impl ExperimentConfig {
    /// The built-in configuration for an experiment. Desk scale unless
    /// `paper_scale`, which restores the published grids.
    pub fn preset(experiment: ExperimentId, paper_scale: bool) -> Self {
        let base = Self {
            experiment,
            eps_two: d_eps_two(),
            d_inv: d_d_inv(),
            d_prime: d_d_prime(),
            n_qubits: d_n_qubits(),
            depths: d_depths(),
            repetitions: d_reps(),
            base_seed: d_seed(),
            global_rate: None,
            global_every: d_one(),
            layers_per_part: d_layers_per_part(),
            compile_bond: d_compile_bond(),
            correction_eps_one: None,
            correction_tracks_eps: false,
            chi_state: d_chi_state(),
            grid_rows: d_grid(),
            grid_cols: d_grid(),
            max_sweeps: d_max_sweeps(),
            metric_chi: d_metric_chi(),
        };
        let mut cfg = match experiment {
            ExperimentId::MpoInverseSweep => Self {
                eps_two: vec![1e-3, 1e-2, 1e-1],
                d_inv: vec![4, 5],
                global_rate: Some(1e-2),
                ..base
            },
            ExperimentId::NoiseInverseDprime => Self {
                eps_two: vec![1e-3, 1e-1],
                d_prime: vec![1, 2, 3, 4, 5],
                global_rate: Some(1e-2),
                ..base
            },
            ExperimentId::DeepQem => Self {
                depths: vec![4, 8, 12, 16],
                repetitions: 3,
                global_rate: Some(0.05),
                global_every: 4,
                correction_eps_one: Some(1e-3),
                ..base
            },
            ExperimentId::SizeScaling => Self {
                n_qubits: vec![4, 6, 8, 10],
                depths: vec![8],
                repetitions: 3,
                correction_eps_one: Some(1e-3),
                ..base
            },
            ExperimentId::ErrThreshold => Self {
                eps_two: vec![0.05, 0.1, 0.15, 0.2],
                depths: vec![8],
                correction_tracks_eps: true,
                ..base
            },
            ExperimentId::PepoInverse => Self {
                eps_two: vec![1e-3, 1e-2],
                repetitions: 2,
                ..base
            },
            ExperimentId::AlphaVsNq => Self {
                n_qubits: vec![4, 6, 8],
                depths: vec![4, 8, 12],
                repetitions: 2,
                correction_eps_one: Some(1e-3),
                ..base
            },
        };
        if paper_scale {
            cfg.repetitions = 200;
            match experiment {
                ExperimentId::MpoInverseSweep | ExperimentId::NoiseInverseDprime => {}
                ExperimentId::DeepQem => {
                    cfg.n_qubits = vec![20];
                    cfg.depths = vec![4, 8, 12, 16, 20];
                }
                ExperimentId::SizeScaling => {
                    cfg.n_qubits = vec![4, 8, 12, 16, 20];
                    cfg.depths = vec![20];
                }
                ExperimentId::ErrThreshold => {
                    cfg.n_qubits = vec![20];
                    cfg.depths = vec![20];
                }
                ExperimentId::PepoInverse => {
                    cfg.grid_rows = 6;
                    cfg.grid_cols = 6;
                    cfg.depths = vec![8];
                    cfg.eps_two = vec![1e-3, 1e-2, 1e-1];
                }
                ExperimentId::AlphaVsNq => {
                    cfg.n_qubits = vec![4, 8, 12, 16, 20];
                    cfg.depths = vec![4, 8, 12, 16, 20];
                }
            }
        }
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects configurations the experiments cannot run: empty grids,
    /// zero repetitions, nonsensical rates or bonds.
    pub fn validate(&self) -> Result<(), String> {
        fn nonempty<T>(name: &str, v: &[T]) -> Result<(), String> {
            if v.is_empty() {
                Err(format!("{name} grid must not be empty"))
            } else {
                Ok(())
            }
        }
        nonempty("eps-two", &self.eps_two)?;
        nonempty("d-inv", &self.d_inv)?;
        nonempty("d-prime", &self.d_prime)?;
        nonempty("n-qubits", &self.n_qubits)?;
        nonempty("depths", &self.depths)?;
        if self.repetitions == 0 {
            return Err("repetitions must be at least 1".into());
        }
        if self.eps_two.iter().any(|&e| !(0.0..1.0).contains(&e)) {
            return Err("eps-two rates must lie in [0, 1)".into());
        }
        if self.d_inv.contains(&0) || self.d_prime.contains(&0) {
            return Err("bond dimensions must be at least 1".into());
        }
        if self.n_qubits.iter().any(|&n| n < 2 || n % 2 != 0) {
            return Err("n-qubits entries must be even and at least 2".into());
        }
        if self.depths.contains(&0) {
            return Err("depths entries must be at least 1".into());
        }
        if self.global_every == 0 || self.layers_per_part == 0 {
            return Err("global-every and layers-per-part must be at least 1".into());
        }
        if self.compile_bond == 0 || self.chi_state == 0 || self.metric_chi == 0 {
            return Err("compile-bond, chi-state and metric-chi must be at least 1".into());
        }
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err("the 2D grid needs at least 2×2 sites".into());
        }
        if self.max_sweeps == 0 {
            return Err("max-sweeps must be at least 1".into());
        }
        if self.correction_tracks_eps && self.correction_eps_one.is_some() {
            return Err(
                "correction-eps-one and correction-tracks-eps are mutually exclusive".into(),
            );
        }
        if matches!(self.experiment, ExperimentId::DeepQem | ExperimentId::SizeScaling
            | ExperimentId::ErrThreshold | ExperimentId::AlphaVsNq)
            && self.depths.iter().any(|d| d % self.layers_per_part != 0)
        {
            return Err(format!(
                "every depth must be a multiple of layers-per-part = {}",
                self.layers_per_part
            ));
        }
        Ok(())
    }

    /// The seeds this configuration sweeps.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64)
            .map(|r| self.base_seed + r)
            .collect()
    }
}
