use crate::cost::CostOracle;
use crate::dro::{
    cvar_dro_constraint_grad, moment_dual_grad, smoothed_cvar_grad, wasserstein_dual_grad, AugmentedPoint, CvarConfig,
    MomentConfig, WassersteinConfig,
};
use crate::error::{Error, Result};
use crate::grid_fem::{volume, volume_sensitivity, StructuredGrid};
use crate::uncertainty::{
    draw_coupling_samples, sample_q0, AtomSamples, NominalLaw, ParameterSpace, ReferenceKernel, SeedRecord,
    WeightedPoints,
};

use super::{ActiveBlocks, AuxGradient, ConstraintEval, ConstraintKind, Evaluation, OptimizationProblem};

/// How the uncertain parameter enters the objective.
#[derive(Debug, Clone)]
pub enum Formulation {
    /// Cost at one fixed parameter.
    Deterministic { load: Vec<f64> },
    /// Expected cost. Empirical laws are integrated exactly, Gaussian ones by sampling.
    Mean {
        law: NominalLaw,
        space: ParameterSpace,
        samples: usize,
    },
    /// Entropic Wasserstein dual, with the multiplier co-optimized.
    Wasserstein {
        law: NominalLaw,
        kernel: ReferenceKernel,
        config: WassersteinConfig,
        inner_samples: usize,
    },
    /// Moment-ball dual, with multiplier, direction and matrix co-optimized.
    Moment {
        config: MomentConfig,
        space: ParameterSpace,
        samples: usize,
    },
    /// Minimize volume under a smoothed CVaR bound.
    Cvar {
        law: NominalLaw,
        space: ParameterSpace,
        config: CvarConfig,
        samples: usize,
    },
    /// Minimize volume under the Wasserstein-robust CVaR bound.
    CvarDro {
        law: NominalLaw,
        kernel: ReferenceKernel,
        config: CvarConfig,
        inner_samples: usize,
    },
}

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Deterministic { .. } => "deterministic",
            Formulation::Mean { .. } => "mean",
            Formulation::Wasserstein { .. } => "wasserstein",
            Formulation::Moment { .. } => "moment",
            Formulation::Cvar { .. } => "cvar",
            Formulation::CvarDro { .. } => "cvar_dro",
        }
    }

    fn constrains_risk(&self) -> bool {
        matches!(self, Formulation::Cvar { .. } | Formulation::CvarDro { .. })
    }
}

/// A cost oracle on a grid, a formulation, and the volume handling.
pub struct RobustProblem {
    pub oracle: Box<dyn CostOracle>,
    pub grid: StructuredGrid,
    pub formulation: Formulation,
    /// Volume equality `Vol(h) = V_T`, if any.
    pub target_volume: Option<f64>,
    /// Volume of the uniform starting design.
    pub initial_volume: f64,
    /// Weight of `Vol(h)` added to the objective.
    pub volume_penalty: f64,
    pub master_seed: u64,
    /// Reuse the iteration-0 batch at every iteration.
    pub frozen_samples: bool,
}

impl RobustProblem {
    fn batch_index(&self, iteration: usize) -> u64 {
        if self.frozen_samples {
            0
        } else {
            iteration as u64
        }
    }

    fn coupling(&self, law: &NominalLaw, kernel: &ReferenceKernel, n: usize, iteration: usize) -> Result<Vec<AtomSamples>> {
        draw_coupling_samples(law, kernel, n, self.master_seed, self.batch_index(iteration))
    }

    fn reference(&self, law: &NominalLaw, space: &ParameterSpace, n: usize, iteration: usize) -> Result<WeightedPoints> {
        let batch = sample_q0(law, space, n, SeedRecord::new(self.master_seed, self.batch_index(iteration), 0))?;
        Ok(WeightedPoints::uniform(batch.points))
    }

    fn expectation_points(&self, law: &NominalLaw, space: &ParameterSpace, n: usize, iteration: usize) -> Result<WeightedPoints> {
        match law {
            NominalLaw::Empirical { atoms, weights } => {
                let total: f64 = weights.iter().sum();
                Ok(WeightedPoints {
                    points: atoms.clone(),
                    weights: weights.iter().map(|w| w / total).collect(),
                })
            }
            NominalLaw::TruncatedGaussian { .. } => self.reference(law, space, n, iteration),
        }
    }

    /// Costs of the iteration-0 batch at `design`, for initializing the anchor.
    fn initial_costs(&self, design: &[f64]) -> Result<Vec<f64>> {
        let points = match &self.formulation {
            Formulation::Cvar { law, space, samples, .. } => self.reference(law, space, *samples, 0)?.points,
            Formulation::CvarDro {
                law,
                kernel,
                inner_samples,
                ..
            } => self
                .coupling(law, kernel, *inner_samples, 0)?
                .into_iter()
                .flat_map(|a| a.inner.points)
                .collect(),
            _ => return Ok(Vec::new()),
        };
        self.oracle.prepare(design)?.costs(&points)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl OptimizationProblem for RobustProblem {
    fn design_len(&self) -> usize {
        self.grid.element_count()
    }

    fn param_dim(&self) -> usize {
        self.oracle.param_dim()
    }

    fn active_blocks(&self) -> ActiveBlocks {
        match self.formulation {
            Formulation::Deterministic { .. } | Formulation::Mean { .. } => ActiveBlocks::default(),
            Formulation::Wasserstein { .. } => ActiveBlocks {
                lambda: true,
                ..ActiveBlocks::default()
            },
            Formulation::Moment { .. } => ActiveBlocks {
                lambda: true,
                tau: true,
                s: true,
                alpha: false,
            },
            Formulation::Cvar { .. } => ActiveBlocks {
                alpha: true,
                ..ActiveBlocks::default()
            },
            Formulation::CvarDro { .. } => ActiveBlocks {
                lambda: true,
                alpha: true,
                ..ActiveBlocks::default()
            },
        }
    }

    fn upper_bounds(&self) -> Vec<f64> {
        self.grid.active_mask().iter().map(|a| if *a { 1.0 } else { 0.0 }).collect()
    }

    fn initial_design(&self) -> Vec<f64> {
        let fill = (self.initial_volume / self.grid.domain_volume()).clamp(0.0, 1.0);
        self.upper_bounds().iter().map(|u| u * fill).collect()
    }

    fn initial_aux(&self, design: &[f64]) -> Result<AugmentedPoint> {
        let mut aux = AugmentedPoint::initial(self.param_dim());
        if self.formulation.constrains_risk() {
            aux.alpha = median(self.initial_costs(design)?);
        }
        Ok(aux)
    }

    fn evaluate(&self, design: &[f64], aux: &AugmentedPoint, iteration: usize) -> Result<Evaluation> {
        let k = self.param_dim();
        let mut aux_grad = AuxGradient::zero(k);
        let mut constraints = Vec::new();
        let (mut objective, mut design_grad) = match &self.formulation {
            Formulation::Deterministic { load } => {
                let prepared = self.oracle.prepare(design)?;
                let points = [load.clone()];
                (prepared.costs(&points)?[0], prepared.weighted_sensitivity(&points, &[1.0])?)
            }
            Formulation::Mean { law, space, samples } => {
                let pts = self.expectation_points(law, space, *samples, iteration)?;
                let prepared = self.oracle.prepare(design)?;
                let costs = prepared.costs(&pts.points)?;
                let value = costs.iter().zip(&pts.weights).map(|(c, w)| c * w).sum();
                (value, prepared.weighted_sensitivity(&pts.points, &pts.weights)?)
            }
            Formulation::Wasserstein {
                law,
                kernel,
                config,
                inner_samples,
            } => {
                let batch = self.coupling(law, kernel, *inner_samples, iteration)?;
                let g = wasserstein_dual_grad(self.oracle.as_ref(), design, aux.lambda, config, &batch)?;
                aux_grad.lambda = g.lambda;
                (g.value, g.design)
            }
            Formulation::Moment { config, space, samples } => {
                let law = NominalLaw::gaussian(config.mean.clone(), config.cov.clone())?;
                let pts = self.reference(&law, space, *samples, iteration)?;
                let g = moment_dual_grad(self.oracle.as_ref(), design, aux, config, &pts)?;
                aux_grad.lambda = g.lambda;
                aux_grad.tau = g.tau;
                aux_grad.s = g.s;
                (g.value, g.design)
            }
            Formulation::Cvar {
                law,
                space,
                config,
                samples,
            } => {
                let pts = self.reference(law, space, *samples, iteration)?;
                let g = smoothed_cvar_grad(self.oracle.as_ref(), design, aux.alpha, config, &pts)?;
                aux_grad.alpha = g.alpha;
                constraints.push(ConstraintEval {
                    kind: ConstraintKind::Inequality,
                    value: g.value - config.threshold,
                    design_grad: g.design,
                });
                (volume(&self.grid, design), volume_sensitivity(&self.grid))
            }
            Formulation::CvarDro {
                law,
                kernel,
                config,
                inner_samples,
            } => {
                let batch = self.coupling(law, kernel, *inner_samples, iteration)?;
                let g = cvar_dro_constraint_grad(self.oracle.as_ref(), design, aux.lambda, aux.alpha, config, &batch)?;
                aux_grad.lambda = g.lambda;
                aux_grad.alpha = g.alpha;
                constraints.push(ConstraintEval {
                    kind: ConstraintKind::Inequality,
                    value: g.value - config.threshold,
                    design_grad: g.design,
                });
                (volume(&self.grid, design), volume_sensitivity(&self.grid))
            }
        };
        if design_grad.len() != design.len() {
            return Err(Error::DimensionMismatch {
                what: "objective gradient",
                expected: design.len(),
                found: design_grad.len(),
            });
        }
        let vol = volume(&self.grid, design);
        if self.volume_penalty != 0.0 {
            objective += self.volume_penalty * vol;
            for (g, s) in design_grad.iter_mut().zip(volume_sensitivity(&self.grid)) {
                *g += self.volume_penalty * s;
            }
        }
        if let Some(target) = self.target_volume {
            constraints.push(ConstraintEval {
                kind: ConstraintKind::Equality,
                value: vol - target,
                design_grad: volume_sensitivity(&self.grid),
            });
        }
        Ok(Evaluation {
            objective,
            design_grad,
            aux_grad,
            constraints,
            volume: vol,
        })
    }
}
