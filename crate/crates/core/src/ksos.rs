//! Kernel SOS layer: fit the SDP to a sample set, evaluate the surrogate
//! `f(u) = c + v(u)ᵀ R⁻¹ B R⁻ᵀ v(u)` and extract a candidate minimizer.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::kernels::{feature_vector, gram_matrix, GramFactor, KernelSpec};
use crate::problems::Bounds;
use crate::scalar::Real;
use crate::sdp::{solve_ksos, KsosSdpProblem, KsosSolution, SdpStatus, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Sampled control vectors with their (smoothed) costs.
#[derive(Debug, Clone)]
pub struct SampleSet<T: Real> {
    pub points: Vec<DVector<T>>,
    pub costs: DVector<T>,
    pub bounds: Bounds<T>,
}

impl<T: Real> SampleSet<T> {
    pub fn new(points: Vec<DVector<T>>, costs: DVector<T>, bounds: Bounds<T>) -> Result<Self> {
        if points.is_empty() {
            return invalid("a sample set needs at least one point");
        }
        if points.len() != costs.len() {
            return invalid(format!("{} points but {} costs", points.len(), costs.len()));
        }
        let d = bounds.dim();
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return invalid(format!("sample {i} has dimension {} instead of {d}", p.len()));
            }
            if !bounds.contains(p) {
                return invalid(format!("sample {i} lies outside the bounds"));
            }
        }
        if let Some(i) = costs.iter().position(|c| !c.is_finite()) {
            return invalid(format!("cost of sample {i} is not finite"));
        }
        if points.len() < d + 1 {
            warn!("only {} samples in dimension {d}", points.len());
        }
        Ok(Self { points, costs, bounds })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Index of the lowest cost (first one on ties).
    pub fn argmin(&self) -> usize {
        argmin(self.costs.iter().copied())
    }
}

fn argmin<T: Real>(values: impl Iterator<Item = T>) -> usize {
    let mut best = (0, T::infinity());
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Fitted kernel SOS surrogate. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SurrogateModel<T: Real> {
    pub c: T,
    pub b: DMatrix<T>,
    pub gram: GramFactor<T>,
    pub spec: KernelSpec<T>,
    pub points: Vec<DVector<T>>,
}

impl<T: Real> SurrogateModel<T> {
    /// Evaluates `c + wᵀBw` with `w = R⁻ᵀ v(u)`.
    ///
    /// At a sample point the feature vector includes the Gram jitter on the
    /// matching entry, so `w` is exactly the corresponding column of `R`.
    pub fn eval(&self, u: &DVector<T>) -> Result<T> {
        let mut v = feature_vector(&self.spec, &self.points, u)?;
        if let Some(i) = self.points.iter().position(|p| p == u) {
            v[i] += self.gram.jitter;
        }
        let w = self.gram.solve_rt(&v);
        Ok(self.c + w.dot(&(&self.b * &w)))
    }
}

/// Evaluates the surrogate at `u`.
pub fn surrogate_eval<T: Real>(model: &SurrogateModel<T>, u: &DVector<T>) -> Result<T> {
    model.eval(u)
}

/// Builds the Gram matrix of the samples, solves the SDP and packages the
/// surrogate.
pub fn fit<T: Real>(
    samples: &SampleSet<T>,
    spec: &KernelSpec<T>,
    mu: T,
) -> Result<(SurrogateModel<T>, KsosSolution<T>)> {
    fit_with(samples, spec, mu, DEFAULT_MAX_ITERS, T::lit(DEFAULT_TOL))
}

/// [`fit`] with explicit interior-point settings.
pub fn fit_with<T: Real>(
    samples: &SampleSet<T>,
    spec: &KernelSpec<T>,
    mu: T,
    max_iters: usize,
    tol: T,
) -> Result<(SurrogateModel<T>, KsosSolution<T>)> {
    let gram = gram_matrix(spec, &samples.points)?;
    let problem = KsosSdpProblem::new(samples.costs.clone(), gram, mu)?;
    let solution = solve_ksos(&problem, max_iters, tol)?;
    let model = SurrogateModel {
        c: solution.c,
        b: solution.b.clone(),
        gram: problem.gram,
        spec: *spec,
        points: samples.points.clone(),
    };
    Ok((model, solution))
}

/// Where the proposed candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    /// Clipped dual-weighted combination of the samples.
    DualWeights,
    /// A raw sample with a lower surrogate value than the weighted combination.
    Sample(usize),
    /// The SDP did not converge; the lowest-cost sample is returned.
    Fallback(usize),
}

#[derive(Debug, Clone)]
pub struct Candidate<T: Real> {
    pub point: DVector<T>,
    pub surrogate_value: T,
    pub source: CandidateSource,
}

impl<T: Real> Candidate<T> {
    pub fn is_fallback(&self) -> bool {
        matches!(self.source, CandidateSource::Fallback(_))
    }
}

/// Proposes `û = clip(Σ β_i u_i)` and returns it unless some sample has a
/// strictly lower surrogate value, in which case the best such sample wins.
pub fn propose_candidate<T: Real>(
    model: &SurrogateModel<T>,
    solution: &KsosSolution<T>,
    samples: &SampleSet<T>,
) -> Result<Candidate<T>> {
    if solution.status != SdpStatus::Optimal {
        let i = samples.argmin();
        warn!("SDP finished with status {}; using the best sample", solution.status);
        return Ok(Candidate {
            point: samples.points[i].clone(),
            surrogate_value: model.eval(&samples.points[i])?,
            source: CandidateSource::Fallback(i),
        });
    }
    let mut weighted = DVector::zeros(samples.dim());
    for (beta, p) in solution.dual_weights.iter().zip(&samples.points) {
        weighted += p * *beta;
    }
    let weighted = samples.bounds.clip(&weighted);
    let weighted_value = model.eval(&weighted)?;

    let sample_values = samples
        .points
        .iter()
        .map(|p| model.eval(p))
        .collect::<Result<Vec<T>>>()?;
    let i = argmin(sample_values.iter().copied());
    if sample_values[i] < weighted_value || !weighted_value.is_finite() {
        return Ok(Candidate {
            point: samples.points[i].clone(),
            surrogate_value: sample_values[i],
            source: CandidateSource::Sample(i),
        });
    }
    Ok(Candidate {
        point: weighted,
        surrogate_value: weighted_value,
        source: CandidateSource::DualWeights,
    })
}
