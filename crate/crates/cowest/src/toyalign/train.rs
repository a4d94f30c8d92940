//! Objectives, analytic gradients, plain gradient-descent training loops,
//! the finite-difference self-check, and the trained-policy verification
//! that negative-support mass has collapsed.

use serde::{Deserialize, Serialize};

use super::{ToyError, ToyPolicy, ToyUniverse};

pub type PolicyGrad = Vec<Vec<f64>>;

/// −ln σ(x), computed so that large |x| neither overflows nor loses the
/// answer to cancellation, and x = 0 yields ln 2 exactly.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of the ground-truth entry across contexts.
pub fn sft_loss(policy: &ToyPolicy, universe: &ToyUniverse) -> f64 {
    let n = universe.contexts.len() as f64;
    universe
        .contexts
        .iter()
        .enumerate()
        .map(|(i, ctx)| -policy.log_probs(i)[ctx.ground_truth])
        .sum::<f64>()
        / n
}

/// d(sft_loss)/d(logit): (softmax − onehot(ground_truth)) / #contexts.
pub fn sft_grad(policy: &ToyPolicy, universe: &ToyUniverse) -> PolicyGrad {
    let n = universe.contexts.len() as f64;
    universe
        .contexts
        .iter()
        .enumerate()
        .map(|(i, ctx)| {
            let probs = policy.probs(i);
            probs
                .iter()
                .enumerate()
                .map(|(j, p)| (p - f64::from(u8::from(j == ctx.ground_truth))) / n)
                .collect()
        })
        .collect()
}

/// A preference pair mapped onto universe coordinates: within `context`,
/// the response at `chosen` is preferred over the one at `rejected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpoTriplet {
    pub chosen: usize,
    pub context: usize,
    pub rejected: usize,
}

pub(crate) fn check_shape(
    policy: &ToyPolicy,
    universe: &ToyUniverse,
    what: &str,
) -> Result<(), ToyError> {
    let matches = policy.logits.len() == universe.contexts.len()
        && policy
            .logits
            .iter()
            .zip(&universe.contexts)
            .all(|(row, ctx)| row.len() == ctx.vocab_size());
    if matches {
        Ok(())
    } else {
        Err(ToyError::InvalidUniverse {
            reason: format!("{what} policy shape does not match the universe"),
        })
    }
}

fn check_triplets(universe: &ToyUniverse, triplets: &[DpoTriplet]) -> Result<(), ToyError> {
    for t in triplets {
        let ok = universe
            .contexts
            .get(t.context)
            .map(|c| t.chosen < c.vocab_size() && t.rejected < c.vocab_size() && t.chosen != t.rejected)
            .unwrap_or(false);
        if !ok {
            return Err(ToyError::InvalidUniverse {
                reason: format!("triplet {t:?} does not address the universe's layout"),
            });
        }
    }
    Ok(())
}

/// Mean over triplets of −ln σ(α·margin), where margin is the chosen-minus
/// -rejected difference in log-probability ratios against the reference.
/// With policy == reference every margin is exactly zero and the loss is
/// exactly ln 2.
pub fn dpo_loss(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    triplets: &[DpoTriplet],
    alpha: f64,
) -> f64 {
    assert!(!triplets.is_empty(), "dpo_loss needs at least one triplet");
    let total: f64 = triplets
        .iter()
        .map(|t| {
            let lp = policy.log_probs(t.context);
            let lr = reference.log_probs(t.context);
            let margin = (lp[t.chosen] - lr[t.chosen]) - (lp[t.rejected] - lr[t.rejected]);
            neg_log_sigmoid(alpha * margin)
        })
        .sum();
    total / triplets.len() as f64
}

/// Analytic gradient of `dpo_loss` in the policy's logits. Per triplet the
/// chain rule gives coefficient −α·σ(−α·margin) applied to
/// (∂log π(chosen) − ∂log π(rejected)), with ∂log π(y)/∂logit_j =
/// onehot(y)_j − softmax_j; the softmax terms cancel coordinate-wise because
/// both responses live in the same context.
pub fn dpo_grad(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    triplets: &[DpoTriplet],
    alpha: f64,
) -> PolicyGrad {
    assert!(!triplets.is_empty(), "dpo_grad needs at least one triplet");
    let mut grad: PolicyGrad = policy.logits.iter().map(|l| vec![0.0; l.len()]).collect();
    let scale = 1.0 / triplets.len() as f64;
    for t in triplets {
        let lp = policy.log_probs(t.context);
        let lr = reference.log_probs(t.context);
        let margin = (lp[t.chosen] - lr[t.chosen]) - (lp[t.rejected] - lr[t.rejected]);
        let coef = -alpha * sigmoid(-alpha * margin);
        let probs = policy.probs(t.context);
        for (j, p) in probs.iter().enumerate() {
            let d_chosen = f64::from(u8::from(j == t.chosen)) - p;
            let d_rejected = f64::from(u8::from(j == t.rejected)) - p;
            grad[t.context][j] += coef * (d_chosen - d_rejected) * scale;
        }
    }
    grad
}

/// One training-log line; step counts from 0 and the loss is measured
/// before that step's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub loss: f64,
    pub step: u32,
}

/// Flags runs where the loss rises for `WINDOW` consecutive steps, the
/// plain-GD signature of a step size far too large.
struct DivergenceMonitor {
    prev: Option<f64>,
    streak: u32,
}

impl DivergenceMonitor {
    const WINDOW: u32 = 10;

    fn new() -> Self {
        Self { prev: None, streak: 0 }
    }

    fn observe(&mut self, step: u32, loss: f64) -> Result<(), ToyError> {
        // NaN counts as an increase: a poisoned loss must not look stable.
        let increased = self.prev.map(|prev| !(loss <= prev)).unwrap_or(false);
        self.streak = if increased { self.streak + 1 } else { 0 };
        self.prev = Some(loss);
        if self.streak >= Self::WINDOW {
            Err(ToyError::DivergenceDetected { step, window: Self::WINDOW })
        } else {
            Ok(())
        }
    }
}

fn descend(logits: &mut [Vec<f64>], grad: &PolicyGrad, lr: f64) {
    for (row, grow) in logits.iter_mut().zip(grad) {
        for (l, g) in row.iter_mut().zip(grow) {
            *l -= lr * g;
        }
    }
}

/// Full-batch gradient descent on `sft_loss`. Single-threaded on purpose:
/// the training log doubles as a golden file, so step order must never
/// depend on scheduling.
pub fn train_sft(
    universe: &ToyUniverse,
    init: &ToyPolicy,
    lr: f64,
    steps: u32,
) -> Result<(ToyPolicy, Vec<StepRecord>), ToyError> {
    check_shape(init, universe, "init")?;
    let mut policy = init.clone();
    let mut log = Vec::with_capacity(steps as usize);
    let mut monitor = DivergenceMonitor::new();
    for step in 0..steps {
        let loss = sft_loss(&policy, universe);
        log.push(StepRecord { loss, step });
        monitor.observe(step, loss)?;
        let grad = sft_grad(&policy, universe);
        descend(&mut policy.logits, &grad, lr);
    }
    Ok((policy, log))
}

/// Full-batch gradient descent on `dpo_loss`, starting from the reference
/// policy (so the first logged loss is exactly ln 2).
pub fn train_dpo(
    universe: &ToyUniverse,
    reference: &ToyPolicy,
    triplets: &[DpoTriplet],
    alpha: f64,
    lr: f64,
    steps: u32,
) -> Result<(ToyPolicy, Vec<StepRecord>), ToyError> {
    check_shape(reference, universe, "reference")?;
    check_triplets(universe, triplets)?;
    let mut policy = reference.clone();
    let mut log = Vec::with_capacity(steps as usize);
    let mut monitor = DivergenceMonitor::new();
    for step in 0..steps {
        let loss = dpo_loss(&policy, reference, triplets, alpha);
        log.push(StepRecord { loss, step });
        monitor.observe(step, loss)?;
        let grad = dpo_grad(&policy, reference, triplets, alpha);
        descend(&mut policy.logits, &grad, lr);
    }
    Ok((policy, log))
}

/// Central finite differences with step `h` against the analytic gradient;
/// returns the max over coordinates of |analytic − fd| / max(1e−12, |fd|).
pub fn fd_check(
    loss: impl Fn(&ToyPolicy) -> f64,
    grad: impl Fn(&ToyPolicy) -> PolicyGrad,
    policy: &ToyPolicy,
    h: f64,
) -> f64 {
    let analytic = grad(policy);
    let mut worst = 0.0f64;
    let mut probe = policy.clone();
    for c in 0..policy.logits.len() {
        for j in 0..policy.logits[c].len() {
            let original = probe.logits[c][j];
            probe.logits[c][j] = original + h;
            let plus = loss(&probe);
            probe.logits[c][j] = original - h;
            let minus = loss(&probe);
            probe.logits[c][j] = original;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (analytic[c][j] - fd).abs() / fd.abs().max(1e-12);
            worst = worst.max(rel);
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextMass {
    pub context: String,
    /// Negative-support mass of the uniform (untrained) policy, for
    /// contrast.
    pub initial_mass: f64,
    pub negative_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub contexts: Vec<ContextMass>,
    pub epsilon: f64,
    pub pass: bool,
}

/// Checks the trained policy's probability mass on each context's negative
/// support (entries whose quality fails to beat the baseline). Passing means
/// every context keeps that mass below epsilon: the policy has learned to
/// avoid responses whose refinement would not beat the strong baseline.
pub fn verify_corollary(
    policy: &ToyPolicy,
    universe: &ToyUniverse,
    epsilon: f64,
) -> CorollaryReport {
    let mut contexts = Vec::with_capacity(universe.contexts.len());
    let mut pass = true;
    for (i, ctx) in universe.contexts.iter().enumerate() {
        let probs = policy.probs(i);
        let negative = ctx.negative_support();
        let negative_mass: f64 = negative.iter().map(|&j| probs[j]).sum();
        let initial_mass = negative.len() as f64 / ctx.vocab_size() as f64;
        pass &= negative_mass < epsilon;
        contexts.push(ContextMass { context: ctx.id.clone(), initial_mass, negative_mass });
    }
    CorollaryReport { contexts, epsilon, pass }
}
