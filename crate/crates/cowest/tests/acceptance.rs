//! Acceptance suite: one test per release criterion, each ending in a
//! printed PASS line (visible with --nocapture). Every expected value here
//! is computed independently of the code under test: brute-force oracles,
//! finite differences, or hand-worked arithmetic.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use cowest::cli::{
    cmd_build_prefs, cmd_report, cmd_train_toy, BuildPrefsArgs, CallReport, CommonArgs,
    ReportArgs, TrainToyArgs,
};
use cowest::metrics::{accuracy, exact_match, macro_f1, token_f1};
use cowest::prefdata::{classify, pair, Polarity, SampleRecord};
use cowest::rng::SplitMix64;
use cowest::toyalign::{
    dpo_grad, dpo_loss, fd_check, fixture_universe, sft_grad, sft_loss, train_sft,
    verify_corollary, CorollaryReport, DpoTriplet, ToyContext, ToyPolicy, ToyUniverse,
};

const LN_2: f64 = std::f64::consts::LN_2;

fn pass(n: u32, what: &str) {
    println!("criterion {n:02} PASS: {what}");
}

// ---------------------------------------------------------------- pairing

/// From-scratch restatement of the pairing rule: walk the samples in order,
/// split on delta (ties negative), zip the two sides index by index.
fn oracle_pairs(deltas: &[i32]) -> Vec<(u32, u32)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &d) in deltas.iter().enumerate() {
        if d > 0 {
            pos.push(i as u32);
        } else {
            neg.push(i as u32);
        }
    }
    let n = pos.len().min(neg.len());
    (0..n).map(|j| (pos[j], neg[j])).collect()
}

fn sample(example_id: &str, i: u32, e_strong: u8, e_collab: u8) -> SampleRecord {
    let delta = i32::from(e_collab) - i32::from(e_strong);
    SampleRecord {
        delta,
        draft_text: format!("draft-{i}"),
        e_collab,
        e_strong,
        example_id: example_id.into(),
        polarity: classify(delta),
        refined_text: format!("refined-{i}"),
        sample_index: i,
    }
}

#[test]
fn c01_pairing_matches_the_brute_force_oracle() {
    let mut rng = SplitMix64::new(0xACCE_0001);
    let started = Instant::now();
    for case in 0..1000u32 {
        let k = 1 + (rng.next_u64() % 10) as u32;
        let e_strong = 1 + (rng.next_u64() % 10) as u8;
        let samples: Vec<SampleRecord> = (0..k)
            .map(|i| sample("case", i, e_strong, 1 + (rng.next_u64() % 10) as u8))
            .collect();
        let deltas: Vec<i32> = samples.iter().map(|s| s.delta).collect();

        let positives: Vec<SampleRecord> =
            samples.iter().filter(|s| s.polarity == Polarity::Positive).cloned().collect();
        let negatives: Vec<SampleRecord> =
            samples.iter().filter(|s| s.polarity == Polarity::Negative).cloned().collect();
        let triplets = pair("prompt", &positives, &negatives);

        let expected = oracle_pairs(&deltas);
        assert_eq!(triplets.len(), expected.len(), "case {case}: deltas {deltas:?}");
        for (t, (ci, ri)) in triplets.iter().zip(&expected) {
            assert_eq!(t.meta.chosen_index, *ci, "case {case}: deltas {deltas:?}");
            assert_eq!(t.meta.rejected_index, *ri, "case {case}: deltas {deltas:?}");
            assert_eq!(t.chosen, format!("draft-{ci}"));
            assert_eq!(t.rejected, format!("draft-{ri}"));
            assert_eq!(t.prompt, "prompt");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "pairing oracle took {elapsed:?}");
    pass(1, "index-aligned pairing agrees with the brute-force oracle on 1000 random instances");
}

#[test]
fn c02_score_deltas_split_on_zero_with_ties_negative() {
    for delta in [-2, -1, 0] {
        assert_eq!(classify(delta), Polarity::Negative, "delta {delta}");
    }
    for delta in [1, 2, 5] {
        assert_eq!(classify(delta), Polarity::Positive, "delta {delta}");
    }
    pass(2, "deltas -2/-1/0 classify negative and 1/2/5 classify positive");
}

// ------------------------------------------------------------ toy algebra

fn random_universe(rng: &mut SplitMix64) -> ToyUniverse {
    let n_contexts = 1 + (rng.next_u64() % 5) as usize;
    let contexts = (0..n_contexts)
        .map(|c| {
            let v = 2 + (rng.next_u64() % 7) as usize;
            // Valid universes need both supports inhabited: pin the first
            // entry at or below the baseline and the last one above it.
            let baseline = 2 + (rng.next_u64() % 8) as u8;
            let mut quality: Vec<u8> =
                (0..v).map(|_| 1 + (rng.next_u64() % 10) as u8).collect();
            quality[0] = 1 + (rng.next_u64() % u64::from(baseline)) as u8;
            quality[v - 1] = baseline + 1 + (rng.next_u64() % u64::from(10 - baseline)) as u8;
            ToyContext {
                baseline,
                ground_truth: (rng.next_u64() as usize) % v,
                id: format!("ctx{c}"),
                quality,
                query: format!("query {c}?"),
                vocab: (0..v).map(|j| format!("ctx{c} reply {j}")).collect(),
            }
        })
        .collect();
    ToyUniverse::new(contexts).unwrap()
}

fn random_policy(universe: &ToyUniverse, rng: &mut SplitMix64) -> ToyPolicy {
    ToyPolicy {
        logits: universe
            .contexts
            .iter()
            .map(|c| (0..c.vocab_size()).map(|_| 3.0 * rng.next_f64() - 1.5).collect())
            .collect(),
    }
}

/// Unconstrained random pairs; fine wherever no derivative is compared
/// against finite differences.
fn random_triplets(universe: &ToyUniverse, rng: &mut SplitMix64) -> Vec<DpoTriplet> {
    let t = 1 + (rng.next_u64() % 12) as usize;
    (0..t)
        .map(|_| {
            let context = (rng.next_u64() as usize) % universe.contexts.len();
            let v = universe.contexts[context].vocab_size();
            let chosen = (rng.next_u64() as usize) % v;
            let mut rejected = (rng.next_u64() as usize) % v;
            while rejected == chosen {
                rejected = (rng.next_u64() as usize) % v;
            }
            DpoTriplet { chosen, context, rejected }
        })
        .collect()
}

/// Random star per touched context: a random hub preferred over every other
/// entry, with a random subset of contexts left untouched. Stars keep every
/// coordinate of a touched context inside some pair, where the derivative
/// is genuinely nonzero and finite differences carry signal; a coordinate
/// outside every pair has true derivative exactly zero, and a central
/// difference there returns rounding noise that the relative-error formula
/// would compare against itself. Untouched contexts stay in the instance to
/// check the exactly-zero case, where the difference is bitwise null.
fn star_triplets(universe: &ToyUniverse, rng: &mut SplitMix64) -> Vec<DpoTriplet> {
    let n = universe.contexts.len();
    let skip = if n > 1 { (rng.next_u64() as usize) % n } else { usize::MAX };
    let mut triplets = Vec::new();
    for (context, ctx) in universe.contexts.iter().enumerate() {
        if context == skip {
            continue;
        }
        let v = ctx.vocab_size();
        let hub = (rng.next_u64() as usize) % v;
        for j in (0..v).filter(|&j| j != hub) {
            triplets.push(DpoTriplet { chosen: hub, context, rejected: j });
        }
    }
    triplets
}

#[test]
fn c03_identical_policies_sit_exactly_at_ln_two() {
    let mut rng = SplitMix64::new(0xACCE_0003);
    for _ in 0..20 {
        let universe = random_universe(&mut rng);
        let policy = random_policy(&universe, &mut rng);
        let triplets = random_triplets(&universe, &mut rng);
        let alpha = 0.05 + 0.95 * rng.next_f64();
        let loss = dpo_loss(&policy, &policy, &triplets, alpha);
        assert!(
            (loss - LN_2).abs() <= 1e-12,
            "loss {loss} deviates from ln 2 by {}",
            (loss - LN_2).abs()
        );
    }
    pass(3, "preference loss of an untouched policy is ln 2 to 1e-12 on 20 random instances");
}

#[test]
fn c04_analytic_gradients_match_finite_differences() {
    let mut rng = SplitMix64::new(0xACCE_0004);
    let started = Instant::now();
    for case in 0..50 {
        let universe = random_universe(&mut rng);
        let policy = random_policy(&universe, &mut rng);
        let reference = random_policy(&universe, &mut rng);
        let triplets = star_triplets(&universe, &mut rng);
        let alpha = 0.05 + 0.95 * rng.next_f64();

        let sft_err = fd_check(
            |p| sft_loss(p, &universe),
            |p| sft_grad(p, &universe),
            &policy,
            1e-6,
        );
        assert!(sft_err < 1e-5, "case {case}: sft gradient off by {sft_err:.3e}");

        let dpo_err = fd_check(
            |p| dpo_loss(p, &reference, &triplets, alpha),
            |p| dpo_grad(p, &reference, &triplets, alpha),
            &policy,
            1e-6,
        );
        assert!(dpo_err < 1e-5, "case {case}: dpo gradient off by {dpo_err:.3e}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "gradient check took {elapsed:?}");
    pass(4, "analytic gradients match central differences under 1e-5 on 50 random instances");
}

// --------------------------------------------------------------- toy lab

#[test]
fn c05_toy_pipeline_unlearns_every_negative_response() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::toy_config_in(dir.path(), common::TOY_SEED);
    let args = TrainToyArgs {
        common: CommonArgs { cache_dir: None, config, max_requests: None, seed: None },
    };
    let started = Instant::now();
    let paths = cmd_train_toy(&args).expect("toy pipeline failed");
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "toy pipeline took {elapsed:?}");

    let raw = std::fs::read_to_string(paths.reports.join("corollary.json")).unwrap();
    let report: CorollaryReport = serde_json::from_str(&raw).unwrap();
    assert_eq!(report.epsilon, 1e-3);
    assert!(report.pass);
    assert_eq!(report.contexts.len(), 3);
    for ctx in &report.contexts {
        assert!(
            ctx.negative_mass < 1e-3,
            "context {}: negative mass {:.3e}",
            ctx.context,
            ctx.negative_mass
        );
        assert!(
            ctx.initial_mass >= 0.3,
            "context {}: initial mass {} leaves nothing to unlearn",
            ctx.context,
            ctx.initial_mass
        );
    }
    pass(5, "trained toy policy holds under 1e-3 negative-support mass in every context");
}

#[test]
fn c06_sft_descends_monotonically_and_recovers_the_ground_truth() {
    let universe = fixture_universe();
    let uniform = ToyPolicy::uniform(&universe);

    let (_, log) = train_sft(&universe, &uniform, 0.1, 200).unwrap();
    for window in log.windows(2) {
        assert!(
            window[1].loss <= window[0].loss + 1e-12,
            "loss rose from {} to {} at step {}",
            window[0].loss,
            window[1].loss,
            window[1].step
        );
    }
    assert!(log.last().unwrap().loss < log[0].loss);

    let (trained, _) = train_sft(&universe, &uniform, 0.5, 500).unwrap();
    for (i, ctx) in universe.contexts.iter().enumerate() {
        let probs = trained.probs(i);
        let argmax = (0..probs.len())
            .max_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, ctx.ground_truth, "context {}", ctx.id);
    }
    pass(6, "supervised warm-up descends monotonically and puts its mode on the ground truth");
}

// ---------------------------------------------------------------- metrics

#[test]
fn c07_metrics_reproduce_hand_worked_values() {
    // Ten open-answer items. Per-item expected F1 worked by hand from the
    // token multiset definition; expected values are the exact fractions.
    let qa: [(&str, &str, bool, f64); 10] = [
        ("Paris", "Paris", true, 1.0),
        ("the Paris", "Paris", true, 1.0),
        ("warm rain falls", "warm rain", false, 0.8),
        ("blue", "red", false, 0.0),
        ("", "red", false, 0.0),
        ("king of spain", "spain king", false, 0.8),
        ("w x y z", "w x", false, 2.0 / 3.0),
        ("An Apple!", "apple", true, 1.0),
        ("42", "42", true, 1.0),
        ("answer is 42", "42", false, 0.5),
    ];
    for (pred, gold, em, f1) in qa {
        assert_eq!(exact_match(pred, gold), em, "exact_match({pred:?}, {gold:?})");
        let got = token_f1(pred, gold);
        assert!((got - f1).abs() <= 1e-12, "token_f1({pred:?}, {gold:?}) = {got}, want {f1}");
    }

    // Ten classification items over four labels: north and south are
    // perfect, every east is mispredicted as west. Hand-worked per-class
    // F1: north 1, south 1, east 0 (no true positives), west 2/3 (recall 1,
    // precision 1/2), so the macro average is exactly 2/3 and accuracy 0.8.
    let labels: Vec<String> = ["north", "south", "east", "west"].map(String::from).to_vec();
    let golds: Vec<String> = ["north", "north", "north", "south", "south", "south", "east",
        "east", "west", "west"]
        .map(String::from)
        .to_vec();
    let preds: Vec<String> = ["north", "north", "north", "south", "south", "south", "west",
        "west", "west", "west"]
        .map(String::from)
        .to_vec();

    let acc = accuracy(&preds, &golds).unwrap();
    assert!((acc - 0.8).abs() <= 1e-12, "accuracy {acc}");

    let report = macro_f1(&preds, &golds, &labels).unwrap();
    assert!((report.value - 2.0 / 3.0).abs() <= 1e-12, "macro f1 {}", report.value);
    let per_class = report.per_class.as_ref().unwrap();
    assert!((per_class["north"].f1 - 1.0).abs() <= 1e-12);
    assert!((per_class["east"].f1 - 0.0).abs() <= 1e-12);
    assert!((per_class["west"].f1 - 2.0 / 3.0).abs() <= 1e-12);

    pass(7, "all four metrics land on hand-worked values over the 20-item fixture");
}

// --------------------------------------------------------- reproducibility

fn golden_prefs() -> Vec<u8> {
    std::fs::read(common::fixtures_root().join("demo/golden_prefs.jsonl")).unwrap()
}

fn build_prefs(config: std::path::PathBuf) -> cowest::config::RunPaths {
    let args = BuildPrefsArgs {
        common: CommonArgs { cache_dir: None, config, max_requests: None, seed: None },
    };
    cmd_build_prefs(&args).expect("preference build failed")
}

fn read_calls(paths: &cowest::config::RunPaths) -> CallReport {
    let raw = std::fs::read_to_string(paths.logs.join("calls.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

#[test]
fn c08_preference_builds_are_byte_reproducible_cold_and_warm() {
    let golden = golden_prefs();

    // Two independent cold runs in separate directories.
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let paths = build_prefs(common::demo_config_in(dir.path(), false));
        let built = std::fs::read(paths.prefs.join("dpo.jsonl")).unwrap();
        assert_eq!(built, golden, "cold build differs from the committed golden file");
    }

    // Same config twice with a shared cache: the warm run must answer
    // entirely from disk and still produce identical bytes.
    let dir = tempfile::tempdir().unwrap();
    let config = common::demo_config_in(dir.path(), true);
    let cold = build_prefs(config.clone());
    let cold_calls = read_calls(&cold);
    assert!(cold_calls.weak > 0 && cold_calls.strong > 0 && cold_calls.judge > 0);

    let warm = build_prefs(config);
    let warm_calls = read_calls(&warm);
    assert_eq!(
        warm_calls,
        CallReport { judge: 0, strong: 0, weak: 0 },
        "warm run still reached the backends"
    );
    let built = std::fs::read(warm.prefs.join("dpo.jsonl")).unwrap();
    assert_eq!(built, golden, "warm build differs from the committed golden file");

    pass(8, "preference exports are byte-identical across reruns and across cold/warm cache");
}

#[test]
fn c09_call_accounting_matches_the_per_example_budget() {
    let dir = tempfile::tempdir().unwrap();
    let paths = build_prefs(common::demo_config_in(dir.path(), false));
    let calls = read_calls(&paths);

    // n = 2 examples, k = 5 drafts: k weak drafts, k refinements plus one
    // baseline from the strong model, and one judgment per strong output.
    let (n, k) = (2u64, 5u64);
    assert_eq!(calls.weak, n * k);
    assert_eq!(calls.strong, n * (k + 1));
    assert_eq!(calls.judge, n * (k + 1));
    assert_eq!(calls.weak + calls.strong, n * 11, "generation calls per example");
    assert_eq!(calls.judge, n * 6, "judge calls per example");
    pass(9, "a k=5 build spends exactly 11 generation and 6 judge calls per example");
}

#[test]
fn c10_report_renders_the_reference_numbers_verbatim() {
    let args = ReportArgs {
        paper: true,
        paper_fixture: Some(common::fixtures_root().join("paper_reference.jsonl")),
        paths: vec![],
    };
    let table = cmd_report(&args).expect("report failed");
    for value in ["75.85", "77.34", "75.10", "60.13", "68.33", "65.61"] {
        assert!(table.contains(value), "reference value {value} missing from:\n{table}");
    }
    pass(10, "the reference table renders all six published numbers verbatim");
}

// Guard for the fixture the suite leans on: the universe save/load round
// trip and the demo config must stay loadable exactly as committed.
#[test]
fn shipped_fixture_configs_stay_loadable() {
    let root = common::fixtures_root();
    let demo = cowest::config::RunConfig::load(&root.join("demo/config.toml")).unwrap();
    assert_eq!(demo.sampling.k, 5);
    assert_eq!(demo.seed, 7);
    let toy = cowest::config::RunConfig::load(&root.join("toy/config.toml")).unwrap();
    assert_eq!(toy.sampling.k, 100);
    assert_eq!(toy.alignment.sft_steps, 40);
    assert_eq!(toy.alignment.steps, 2000);
    let universe = ToyUniverse::load(&root.join("toy/universe.jsonl")).unwrap();
    assert_eq!(universe.contexts.len(), 3);
}
