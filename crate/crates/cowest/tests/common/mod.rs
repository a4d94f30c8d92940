//! Shared builders for the demo trace and fixture files. The committed
//! fixture files are generated by exactly this code (see fixture_sync.rs),
//! so tests and fixtures can never drift apart.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cowest::backend::scripted::FixtureRecord;
use cowest::backend::{Generator, GenerationRequest, Message, ScriptedBackend};
use cowest::cli::PaperEntry;
use cowest::collab::{
    extract_final_answer, refine_request, render_query, strong_only_request, weak_draft_request,
    RunLogger, SamplerSettings, Stage, StageOutput, TemplateSet,
};
use cowest::dataset::{write_dataset, Dataset, Example, TaskKind};
use cowest::judge::build_judge_messages;
use cowest::prefdata::{build_preferences, export_dpo, PrefJob, PrefOutcome};
use cowest::records::write_records;
use cowest::toyalign::fixture_universe;
use std::sync::Arc;

pub const DEMO_SEED: u64 = 7;
pub const DEMO_K: u32 = 5;

/// Seed for the shipped toy-lab config. The scan in seed_scan.rs shows the
/// run is seed-robust (every scanned seed trains all three contexts), so
/// the first seed is as good as any.
pub const TOY_SEED: u64 = 0;

/// Hand-designed replies for one demo example: the strong baseline, then
/// (draft, refinement, judge score) for each of the five samples.
struct ExampleSpec {
    id: &'static str,
    query: &'static str,
    ground_truth: &'static str,
    baseline_reply: &'static str,
    baseline_score: u8,
    samples: [(&'static str, &'static str, u8); 5],
}

/// Example 1 judge scores: baseline 5, samples [7,4,6,5,3] so deltas are
/// [2,-1,1,0,-2]: positives at indices 0 and 2, negatives at 1, 3, 4.
/// Example 2: baseline 6, samples [6,6,8,9,2], deltas [0,0,2,3,-4]:
/// positives at 2 and 3, negatives at 0, 1, 4. Four triplets in total.
const DEMO_EXAMPLES: [ExampleSpec; 2] = [
    ExampleSpec {
        id: "demo-001",
        query: "Why does the daytime sky look blue?",
        ground_truth: "rayleigh scattering",
        baseline_reply: "Working alone: the sky's color comes from how air scatters sunlight.\nAnswer: scattering of sunlight",
        baseline_score: 5,
        samples: [
            (
                "Background: sunlight contains every visible wavelength.\nStep 1: air molecules scatter short wavelengths more strongly.\nStep 2: scattered blue light reaches the eye from all directions.\nAnswer: rayleigh scattering",
                "The draft's scattering argument is sound and complete.\nAnswer: rayleigh scattering",
                7,
            ),
            (
                "Background: the atmosphere bends light.\nStep 1: refraction splits sunlight like a prism.\nAnswer: atmospheric refraction",
                "The draft confuses refraction with scattering, and the correction still misses the mechanism's dependence on wavelength.\nAnswer: light refraction in air",
                4,
            ),
            (
                "Background: gas molecules are far smaller than visible wavelengths.\nStep 1: scattering strength scales inversely with the fourth power of wavelength.\nAnswer: rayleigh scattering of sunlight",
                "The draft states the fourth-power law correctly.\nAnswer: rayleigh scattering of sunlight",
                6,
            ),
            (
                "Background: the sky mirrors the ground.\nStep 1: oceans are blue, so the sky reflects them.\nAnswer: ocean reflection",
                "The reflection theory is wrong; correcting toward scattering, though without naming the mechanism.\nAnswer: short-wavelength scattering",
                5,
            ),
            (
                "Background: ozone absorbs light.\nStep 1: the ozone layer tints transmitted light blue.\nAnswer: ozone absorption",
                "Ozone absorption is not the mechanism, and the corrected answer stays vague.\nAnswer: blue light scattering",
                3,
            ),
        ],
    },
    ExampleSpec {
        id: "demo-002",
        query: "Which gas do plants take in for photosynthesis?",
        ground_truth: "carbon dioxide",
        baseline_reply: "From general knowledge: photosynthesis consumes a common atmospheric gas.\nAnswer: a common atmospheric gas",
        baseline_score: 6,
        samples: [
            (
                "Background: leaves exchange gases through stomata.\nStep 1: plants release oxygen during the day.\nAnswer: oxygen",
                "The draft has the exchange backwards; plants absorb the gas animals breathe out.\nAnswer: carbon dioxide exhaled by animals",
                6,
            ),
            (
                "Background: photosynthesis builds sugars from air and water.\nStep 1: the carbon in glucose has to come from somewhere.\nAnswer: carbon gas",
                "The carbon-source reasoning is right but the name stays imprecise.\nAnswer: airborne carbon",
                6,
            ),
            (
                "Background: the Calvin cycle fixes carbon.\nStep 1: carbon dioxide enters through stomata and is fixed into sugar.\nAnswer: carbon dioxide",
                "The Calvin-cycle account is exactly right.\nAnswer: carbon dioxide",
                8,
            ),
            (
                "Background: plants breathe like animals do.\nStep 1: intake is therefore the reverse of animal breath.\nAnswer: carbon dioxide gas",
                "The breathing analogy is loose but lands on the right gas.\nAnswer: carbon dioxide gas",
                9,
            ),
            (
                "Background: roots absorb dissolved nutrients.\nStep 1: the gas plants need arrives dissolved in soil water as nitrogen.\nAnswer: nitrogen",
                "Nitrogen is wrong; the draft misses photosynthesis entirely and the correction is still off target.\nAnswer: soil nitrogen",
                2,
            ),
        ],
    },
];

pub struct DemoTrace {
    pub dataset: Dataset,
    pub judge: Vec<FixtureRecord>,
    pub strong: Vec<FixtureRecord>,
    pub weak: Vec<FixtureRecord>,
}

fn request_record(request: &GenerationRequest, text: &str) -> FixtureRecord {
    FixtureRecord {
        digest: None,
        messages: Some(request.messages.clone()),
        sample_index: Some(request.sample_index),
        text: text.into(),
    }
}

fn judge_record(messages: Vec<Message>, score: u8) -> FixtureRecord {
    FixtureRecord {
        digest: None,
        messages: Some(messages),
        sample_index: Some(0),
        text: format!("Coherence: {score}\nConsistency: {score}\nScore: {score}"),
    }
}

/// Builds the full scripted trace for the two demo examples: every request
/// the pipeline will issue, paired with its reply.
pub fn demo_trace() -> DemoTrace {
    let templates = TemplateSet::default();
    let sampler = SamplerSettings::default();
    let mut weak = Vec::new();
    let mut strong = Vec::new();
    let mut judge = Vec::new();
    let mut examples = Vec::new();

    for spec in &DEMO_EXAMPLES {
        let example = Example {
            choices: None,
            ground_truth: spec.ground_truth.into(),
            id: spec.id.into(),
            label_set: None,
            query: spec.query.into(),
            task_kind: TaskKind::OpenQa,
        };
        let query = render_query(&example);

        let baseline_request = strong_only_request(&templates, &example, DEMO_SEED).unwrap();
        strong.push(request_record(&baseline_request, spec.baseline_reply));
        judge.push(judge_record(
            build_judge_messages(
                &query,
                &extract_final_answer(spec.baseline_reply),
                &example.ground_truth,
            ),
            spec.baseline_score,
        ));

        for (i, (draft_text, refined_text, score)) in spec.samples.iter().enumerate() {
            let sample_index = i as u32;
            let draft_request =
                weak_draft_request(&templates, &example, sample_index, DEMO_K, sampler, DEMO_SEED)
                    .unwrap();
            weak.push(request_record(&draft_request, draft_text));

            let draft = StageOutput {
                example_id: example.id.clone(),
                sample_index,
                stage: Stage::WeakDraft,
                text: (*draft_text).to_string(),
            };
            let refine_req = refine_request(&templates, &example, &draft, DEMO_SEED).unwrap();
            strong.push(request_record(&refine_req, refined_text));

            judge.push(judge_record(
                build_judge_messages(
                    &query,
                    &extract_final_answer(refined_text),
                    &example.ground_truth,
                ),
                *score,
            ));
        }
        examples.push(example);
    }

    DemoTrace { dataset: Dataset { name: "dataset".into(), examples }, judge, strong, weak }
}

/// Builds generators over the demo trace (no cache, no budget) and runs
/// preference construction with the demo settings.
pub fn run_demo_preferences(trace: &DemoTrace, k: u32) -> (PrefOutcome, [u64; 3]) {
    let weak = Generator::new(Arc::new(ScriptedBackend::from_records(trace.weak.clone()).unwrap()));
    let strong =
        Generator::new(Arc::new(ScriptedBackend::from_records(trace.strong.clone()).unwrap()));
    let judge = Generator::new(Arc::new(ScriptedBackend::from_records(trace.judge.clone()).unwrap()));
    let templates = TemplateSet::default();
    let log = RunLogger::new();
    let job = PrefJob {
        dataset: &trace.dataset,
        judge: &judge,
        k,
        log: &log,
        max_in_flight: 4,
        sampler: SamplerSettings::default(),
        seed: DEMO_SEED,
        strong: &strong,
        templates: &templates,
        weak: &weak,
    };
    let outcome = build_preferences(&job);
    let calls = [weak.backend_calls(), strong.backend_calls(), judge.backend_calls()];
    (outcome, calls)
}

/// Relative paths of every generated fixture file, from the fixtures root.
pub const FIXTURE_FILES: [&str; 9] = [
    "demo/config.toml",
    "demo/dataset.jsonl",
    "demo/golden_prefs.jsonl",
    "demo/judge.jsonl",
    "demo/strong.jsonl",
    "demo/weak.jsonl",
    "paper_reference.jsonl",
    "toy/config.toml",
    "toy/universe.jsonl",
];

const DEMO_CONFIG_TOML: &str = r#"# Two-example demo over scripted backends. Outputs land under the
# invocation directory; inputs resolve relative to this file.
dataset = "dataset.jsonl"
seed = 7
output_dir = "runs"
cache_dir = ".cowest-cache"

[sampling]
k = 5

[backends.weak]
kind = "scripted"
fixture = "weak.jsonl"

[backends.strong]
kind = "scripted"
fixture = "strong.jsonl"

[backends.judge]
kind = "scripted"
fixture = "judge.jsonl"
"#;

/// Everything the committed fixture tree contains except the toy run
/// config, which freezes a scanned seed (see TOY_CONFIG_TOML).
pub fn write_fixtures(root: &Path) {
    let demo = root.join("demo");
    std::fs::create_dir_all(&demo).unwrap();
    std::fs::create_dir_all(root.join("toy")).unwrap();

    let trace = demo_trace();
    write_dataset(&demo.join("dataset.jsonl"), &trace.dataset).unwrap();
    write_records(&demo.join("weak.jsonl"), &trace.weak).unwrap();
    write_records(&demo.join("strong.jsonl"), &trace.strong).unwrap();
    write_records(&demo.join("judge.jsonl"), &trace.judge).unwrap();
    std::fs::write(demo.join("config.toml"), DEMO_CONFIG_TOML).unwrap();

    // The golden preference file is produced by the pipeline itself, with
    // the hand-traced partition asserted before anything is written.
    let (outcome, _) = run_demo_preferences(&trace, DEMO_K);
    assert_eq!(outcome.stats.triplet_count, 4, "demo trace must yield 4 triplets");
    assert!(!outcome.stats.partial);
    let pairs: Vec<(&str, u32, u32)> = outcome
        .triplets
        .iter()
        .map(|t| (t.meta.example_id.as_str(), t.meta.chosen_index, t.meta.rejected_index))
        .collect();
    assert_eq!(
        pairs,
        vec![("demo-001", 0, 1), ("demo-001", 2, 3), ("demo-002", 2, 0), ("demo-002", 3, 1)]
    );
    export_dpo(&outcome.triplets, &demo.join("golden_prefs.jsonl")).unwrap();

    fixture_universe().save(&root.join("toy/universe.jsonl")).unwrap();
    std::fs::write(root.join("toy/config.toml"), toy_config_toml(TOY_SEED, "runs")).unwrap();

    let paper = vec![
        PaperEntry { dataset: "counterfactuals".into(), metric: "exact_match".into(), value: 0.7585 },
        PaperEntry { dataset: "counterfactuals".into(), metric: "token_f1".into(), value: 0.7734 },
        PaperEntry { dataset: "medicine".into(), metric: "accuracy".into(), value: 0.7510 },
        PaperEntry { dataset: "medicine".into(), metric: "macro_f1".into(), value: 0.6013 },
        PaperEntry { dataset: "ethics".into(), metric: "accuracy".into(), value: 0.6833 },
        PaperEntry { dataset: "ethics".into(), metric: "macro_f1".into(), value: 0.6561 },
    ];
    write_records(&root.join("paper_reference.jsonl"), &paper).unwrap();
}

pub fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Toy-lab run config. Drafting 100 samples per context at temperature 1.0
/// keeps every context's preference pool covering both polarities; 40 SFT
/// steps shape the sampler without collapsing it onto the ground truth.
pub fn toy_config_toml(seed: u64, output_dir: &str) -> String {
    format!(
        r#"# Self-contained alignment lab over the three-context toy universe.
seed = {seed}
output_dir = "{output_dir}"

[sampling]
k = 100

[alignment]
alpha = 0.1
epsilon = 1e-3
lr = 0.5
sft_lr = 0.5
sft_steps = 40
steps = 2000

[backends.weak]
kind = "toy"
universe = "universe.jsonl"

[backends.strong]
kind = "toy"
universe = "universe.jsonl"

[backends.judge]
kind = "toy"
universe = "universe.jsonl"
"#
    )
}

/// Copies the toy universe next to a fresh config under `dir` and returns
/// the config path, with outputs kept inside `dir`.
pub fn toy_config_in(dir: &Path, seed: u64) -> PathBuf {
    fixture_universe().save(&dir.join("universe.jsonl")).unwrap();
    let config = toy_config_toml(seed, &dir.join("runs").display().to_string());
    let path = dir.join("toy.toml");
    std::fs::write(&path, config).unwrap();
    path
}

/// A copy of the demo fixture tree plus a config whose output, cache, and
/// input paths all point inside `dir`, for tests that execute commands.
pub fn demo_config_in(dir: &Path, cache: bool) -> PathBuf {
    let trace = demo_trace();
    write_dataset(&dir.join("dataset.jsonl"), &trace.dataset).unwrap();
    write_records(&dir.join("weak.jsonl"), &trace.weak).unwrap();
    write_records(&dir.join("strong.jsonl"), &trace.strong).unwrap();
    write_records(&dir.join("judge.jsonl"), &trace.judge).unwrap();
    let cache_line = if cache {
        format!("cache_dir = \"{}\"\n", dir.join("cache").display())
    } else {
        String::new()
    };
    let config = format!(
        r#"dataset = "dataset.jsonl"
seed = 7
output_dir = "{out}"
{cache_line}
[sampling]
k = 5

[backends.weak]
kind = "scripted"
fixture = "weak.jsonl"

[backends.strong]
kind = "scripted"
fixture = "strong.jsonl"

[backends.judge]
kind = "scripted"
fixture = "judge.jsonl"
"#,
        out = dir.join("runs").display(),
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    path
}
