use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::anyhow;
use rand::seq::index;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use plangen_core::bench::{self, enumerate_complete_plans, oracle_params};
use plangen_core::curation::{
    curate, distinct_thresholds, pr_curve, pr_report, scored_labels, CurationRecord, ThresholdPolicy,
};
use plangen_core::datagen::{
    assemble_prompt, bootstrap_goals, randomized_slots, sample_conditions, sample_counterfactual, BootstrapConfig,
    DatagenError, GoalPool, PromptRecipe, PromptTemplate,
};
use plangen_core::decoder::{decode, decode_batch, DecodeParams, MethodShare};
use plangen_core::embodied::{
    evaluate, household_gold, parse_gold, surface_plans, Embedder, EvalConfig, GoldProgram, MiniEnv, TokenEmbedder,
    VectorEmbedder, HOUSEHOLD_ENV, HOUSEHOLD_GOLD,
};
use plangen_core::plan::{parse_plan, Condition, Goal, InstanceRecord, Plan, PlanningInstance, TaskKind};
use plangen_core::scorer::mock::MockWorld;
use plangen_core::scorer::remote::{remote_bundle, RetryPolicy};
use plangen_core::scorer::server::ScorerServer;
use plangen_core::scorer::{Completion, SamplingParams, ScorerBundle};
use plangen_core::seed::SeedMixer;
use plangen_core::verifier_data::{build_dataset, synthetic_plans, DatasetConfig, PerturbationKind, SourcePlan};

use crate::run::Run;
use crate::{
    BenchArgs, Cli, Command, CurateArgs, DatagenTask, DecodeArgs, EvalArgs, Failure, GenNegativesArgs, Global,
    SamplingArgs, ScorerArgs, ServeArgs, Suite,
};

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{e}"))
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(anyhow!("{e}"))
}

pub fn execute(command: &Command, global: &Global, run: &mut Run, cli: &Cli) -> Result<(), Failure> {
    // results never depend on the pool size, so an already-built pool is fine
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(global.parallelism.max(1))
        .build_global();
    match command {
        Command::Decode(a) => decode_cmd(a, global, run),
        Command::GenNegatives(a) => gen_negatives(a, global, run),
        Command::Curate(a) => curate_cmd(a, run),
        Command::Datagen { task } => datagen(task, global, run),
        Command::EvalEmbodied(a) => eval_embodied(a, run),
        Command::Bench(a) => bench_cmd(a, global, run),
        Command::ServeMock(a) => serve_mock(a, run, cli),
    }
}

fn parse_jsonl<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>, Failure> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| config_err(format!("{what} line {}: {e}", i + 1))))
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for i in items {
        out.push_str(&serde_json::to_string(i).expect("line serialises"));
        out.push('\n');
    }
    out
}

fn lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

struct Scorer {
    bundle: ScorerBundle,
    goal: Option<String>,
}

fn open_scorer(spec: &str, timeout_ms: u64, retries: u32, run: &mut Run) -> Result<Scorer, Failure> {
    if let Some(path) = spec.strip_prefix("mock:") {
        let text = run.read(Path::new(path))?;
        let world = Arc::new(MockWorld::from_json(&text).map_err(|e| config_err(format!("{path}: {e}")))?);
        let goal = world.goal().map(str::to_string);
        Ok(Scorer {
            bundle: ScorerBundle::from_shared(world.clone()).with_completion(world),
            goal,
        })
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        let retry = RetryPolicy {
            attempts: retries.max(1),
            ..RetryPolicy::default()
        };
        Ok(Scorer {
            bundle: remote_bundle(spec, Duration::from_millis(timeout_ms), retry),
            goal: None,
        })
    } else {
        Err(config_err(format!("scorer must be mock:<path> or an http(s) URL, got {spec:?}")))
    }
}

fn scorer_from(args: &ScorerArgs, run: &mut Run) -> Result<Scorer, Failure> {
    open_scorer(&args.scorer, args.timeout_ms, args.retries, run)
}

fn completion_of(scorer: &Scorer) -> Result<&dyn Completion, Failure> {
    scorer
        .bundle
        .completion
        .as_deref()
        .ok_or_else(|| config_err("the scorer offers no completion backend"))
}

// ---------------------------------------------------------------------------
// decode

/// Splits `n` over the mix shares as evenly as possible, earlier shares first.
fn resize_mix(mix: &mut [MethodShare], n: usize) {
    let total: usize = mix.iter().map(|s| s.count).sum();
    if total == n || mix.is_empty() {
        return;
    }
    let m = mix.len();
    for (i, s) in mix.iter_mut().enumerate() {
        s.count = n / m + usize::from(i < n % m);
    }
}

fn decode_params(a: &DecodeArgs, global: &Global, run: &mut Run) -> Result<DecodeParams, Failure> {
    let mut p: DecodeParams = match &a.config {
        Some(path) => {
            let text = run.read(path)?;
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => DecodeParams::default(),
    };
    if let Some(v) = a.alpha {
        p.alpha = v;
    }
    if let Some(v) = a.beam_k {
        p.beam_k = v;
    }
    if let Some(v) = a.candidates_n {
        p.candidates_n = v;
    }
    resize_mix(&mut p.method_mix, p.candidates_n);
    if let Some(v) = a.max_steps {
        p.max_steps = v;
    }
    if let Some(v) = a.epsilon {
        p.epsilon = v;
    }
    if let Some(s) = global.seed {
        p.seed = s;
    }
    p.validate().map_err(config_err)?;
    Ok(p)
}

fn load_instances(a: &DecodeArgs, scorer: &Scorer, run: &mut Run) -> Result<Vec<PlanningInstance>, Failure> {
    let mut out = Vec::new();
    if let Some(path) = &a.instances {
        let text = run.read(path)?;
        let records: Vec<InstanceRecord> = parse_jsonl(&text, &path.display().to_string())?;
        for r in records {
            out.push(r.to_instance().map_err(|e| config_err(format!("instance {}: {e}", r.id)))?);
        }
    }
    for (i, g) in a.goal.iter().enumerate() {
        out.push(PlanningInstance::planning(format!("goal-{}", i + 1), g).map_err(config_err)?);
    }
    if out.is_empty() {
        match &scorer.goal {
            Some(g) => out.push(PlanningInstance::planning("goal-1", g).map_err(config_err)?),
            None => return Err(config_err("no instances: pass --instances or --goal")),
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = out.iter().find(|i| !seen.insert(i.id().to_string())) {
        return Err(config_err(format!("duplicate instance id {}", dup.id())));
    }
    Ok(out)
}

#[derive(Serialize)]
struct PlanLine<'a> {
    id: &'a str,
    kind: TaskKind,
    goal: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<&'a str>,
    plan: Vec<String>,
    terminal: bool,
    stop: plangen_core::decoder::StopReason,
    value: f64,
}

fn decode_cmd(a: &DecodeArgs, global: &Global, run: &mut Run) -> Result<(), Failure> {
    let params = decode_params(a, global, run)?;
    let scorer = scorer_from(&a.scorer, run)?;
    let instances = load_instances(a, &scorer, run)?;
    run.effective(json!({
        "params": params,
        "scorer": a.scorer.scorer,
        "instances": instances.len(),
        "parallelism": global.parallelism,
    }));
    let results = decode_batch(&instances, &scorer.bundle, &params, global.parallelism);

    let mut plans = String::new();
    let mut traces = String::new();
    let mut errors = Vec::new();
    for (inst, r) in instances.iter().zip(&results) {
        match r {
            Ok(out) => {
                let line = PlanLine {
                    id: inst.id(),
                    kind: inst.kind(),
                    goal: inst.goal().text(),
                    condition: inst.condition().map(Condition::text),
                    plan: out.plan.texts(),
                    terminal: out.plan.is_terminal(),
                    stop: out.stop,
                    value: out.best.value,
                };
                plans.push_str(&serde_json::to_string(&line).expect("line serialises"));
                plans.push('\n');
                traces.push_str(&out.trace.to_jsonl(inst.id()));
            }
            Err(f) => {
                traces.push_str(&f.trace.to_jsonl(inst.id()));
                errors.push(json!({
                    "id": inst.id(),
                    "error": f.error.to_string(),
                    "completed_iterations": f.trace.iterations.len(),
                }));
            }
        }
    }
    run.output("plans.jsonl", plans);
    if !a.no_trace {
        run.output("traces.jsonl", traces);
    }
    println!(
        "{}",
        json!({"decoded": instances.len() - errors.len(), "failed": errors.len()})
    );
    if !errors.is_empty() {
        let n = errors.len();
        run.output("errors.jsonl", to_jsonl(&errors));
        return Err(runtime_err(format!("{n} of {} instances failed; see errors.jsonl", instances.len())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-negatives

fn source_plans(text: &str, what: &str) -> Result<Vec<SourcePlan>, Failure> {
    let records: Vec<InstanceRecord> = parse_jsonl(text, what)?;
    records
        .into_iter()
        .map(|r| {
            let steps = r.plan.ok_or_else(|| config_err(format!("record {} has no plan", r.id)))?;
            Ok(SourcePlan {
                goal: Goal::new(r.id.clone(), &r.goal).map_err(|e| config_err(format!("record {}: {e}", r.id)))?,
                plan: Plan::from_texts(&steps).map_err(|e| config_err(format!("record {}: {e}", r.id)))?,
                id: r.id,
            })
        })
        .collect()
}

fn gen_negatives(a: &GenNegativesArgs, global: &Global, run: &mut Run) -> Result<(), Failure> {
    let seed = global.seed.unwrap_or(0);
    let plans = match (&a.plans, a.synthetic) {
        (Some(path), _) => {
            let text = run.read(path)?;
            source_plans(&text, &path.display().to_string())?
        }
        (None, Some(count)) => {
            if a.min_len == 0 || a.min_len > a.max_len {
                return Err(config_err(format!("bad length range {}..={}", a.min_len, a.max_len)));
            }
            synthetic_plans(count, a.min_len, a.max_len, seed)
        }
        (None, None) => return Err(config_err("pass --plans or --synthetic")),
    };
    let kinds = if a.kinds.is_empty() {
        PerturbationKind::ALL.to_vec()
    } else {
        a.kinds
            .iter()
            .map(|k| k.parse::<PerturbationKind>().map_err(config_err))
            .collect::<Result<_, _>>()?
    };
    let config = DatasetConfig {
        kinds,
        per_kind: a.per_kind,
        seed,
        ..DatasetConfig::default()
    };
    run.effective(json!({"dataset": config, "plans": plans.len()}));
    let dataset = build_dataset(&plans, &config).map_err(config_err)?;
    run.output("pairs.jsonl", dataset.to_jsonl());
    let manifest = serde_json::to_string_pretty(&dataset.manifest).expect("manifest serialises") + "\n";
    run.output("dataset.json", manifest);
    println!(
        "{}",
        json!({"positives": dataset.manifest.positives, "negatives": dataset.manifest.negatives, "total": dataset.manifest.total})
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// curate

fn curate_cmd(a: &CurateArgs, run: &mut Run) -> Result<(), Failure> {
    let mut policy = ThresholdPolicy::default();
    if let Some(t) = a.tau_plan {
        policy.plan = t;
    }
    if let Some(t) = a.tau_condition {
        policy.condition = t;
    }
    if let Some(t) = a.tau_counterfactual {
        policy.counterfactual = t;
    }
    policy.validate().map_err(config_err)?;
    let text = run.read(&a.records)?;
    let mut records: Vec<CurationRecord> = parse_jsonl(&text, &a.records.display().to_string())?;
    if let Some(k) = a.kind {
        records.retain(|r| r.tuple_kind == k);
    }
    let mut kinds: Vec<_> = records.iter().map(|r| r.tuple_kind).collect();
    kinds.sort_by_key(|k| format!("{k:?}"));
    kinds.dedup();
    let applied: serde_json::Map<String, Value> = kinds
        .iter()
        .map(|k| (serde_json::to_value(k).unwrap().as_str().unwrap().to_string(), json!(policy.threshold(*k))))
        .collect();
    run.effective(json!({"policy": policy, "kind": a.kind, "applied": applied}));

    let part = curate(&records, &policy);
    run.output("accepted.jsonl", to_jsonl(&part.accepted));
    run.output("rejected.jsonl", to_jsonl(&part.rejected));
    run.output("pending.jsonl", to_jsonl(&part.pending));
    let pr = if records.is_empty() {
        None
    } else {
        scored_labels(&records).ok()
    };
    if let Some(scored) = &pr {
        let points = pr_curve(scored, &distinct_thresholds(scored)).map_err(runtime_err)?;
        run.output("pr.tsv", pr_report(&points));
    }
    let summary = json!({
        "records": records.len(),
        "accepted": part.accepted.len(),
        "rejected": part.rejected.len(),
        "pending": part.pending.len(),
        "thresholds": applied,
        "pr_curve": pr.is_some(),
    });
    run.output("summary.json", serde_json::to_string_pretty(&summary).unwrap() + "\n");
    println!("{summary}");
    Ok(())
}

// ---------------------------------------------------------------------------
// datagen

fn sampling(s: &SamplingArgs) -> SamplingParams {
    let d = SamplingParams::default();
    SamplingParams {
        top_p: s.top_p.unwrap_or(d.top_p),
        temperature: s.temperature.unwrap_or(d.temperature),
        max_tokens: s.max_tokens.unwrap_or(d.max_tokens),
        seed: d.seed,
    }
}

fn template_from(path: &Option<std::path::PathBuf>, fallback: PromptTemplate, run: &mut Run) -> Result<PromptTemplate, Failure> {
    match path {
        Some(p) => {
            let text = run.read(p)?;
            Ok(PromptTemplate::parse(&p.display().to_string(), &text))
        }
        None => Ok(fallback),
    }
}

fn datagen(task: &DatagenTask, global: &Global, run: &mut Run) -> Result<(), Failure> {
    let seed = global.seed.unwrap_or(0);
    match task {
        DatagenTask::Prompts {
            exemplars,
            goals,
            shots,
            scorer,
            timeout_ms,
            retries,
            sampling: s,
        } => {
            let text = run.read(exemplars)?;
            let pool = source_plans(&text, &exemplars.display().to_string())?;
            let targets = lines(&run.read(goals)?);
            if pool.is_empty() || *shots == 0 {
                return Err(config_err("prompts need at least one exemplar and --shots >= 1"));
            }
            let scorer = scorer.as_deref().map(|sp| open_scorer(sp, *timeout_ms, *retries, run)).transpose()?;
            let params = sampling(s);
            run.effective(json!({"shots": shots, "seed": seed, "sampling": params, "targets": targets.len()}));
            let mut prompts = Vec::new();
            let mut plans = Vec::new();
            let mut errors = Vec::new();
            for (i, goal) in targets.iter().enumerate() {
                let mixer = SeedMixer::new(seed).str("datagen-prompt").u64(i as u64);
                let mut rng = mixer.rng();
                let mut picks = index::sample(&mut rng, pool.len(), (*shots).min(pool.len())).into_vec();
                picks.sort_unstable();
                let recipe = PromptRecipe {
                    slots: randomized_slots(mixer.finish()),
                    in_context: picks.iter().map(|&j| (pool[j].goal.text().to_string(), pool[j].plan.clone())).collect(),
                    target_goal: goal.clone(),
                };
                let prompt = assemble_prompt(&recipe).map_err(config_err)?;
                let id = format!("goal-{}", i + 1);
                if let Some(sc) = &scorer {
                    let p = SamplingParams {
                        seed: mixer.str("completion").finish(),
                        ..params
                    };
                    let raw = completion_of(sc)?.complete(&prompt, &p).map_err(runtime_err)?;
                    // the prompt ends at "Step 1:", so a bare completion continues that line
                    let text = if raw.trim_start().starts_with("Step ") {
                        raw.clone()
                    } else {
                        format!("Step 1:{raw}")
                    };
                    match parse_plan(&text) {
                        Ok(plan) if !plan.is_empty() => {
                            let inst = PlanningInstance::planning(id.clone(), goal).map_err(config_err)?;
                            plans.push(InstanceRecord::from_instance(&inst, Some(&plan)));
                        }
                        Ok(_) => errors.push(json!({"id": id, "error": "no steps", "raw": raw})),
                        Err(e) => errors.push(json!({"id": id, "error": e.to_string(), "raw": raw})),
                    }
                }
                prompts.push(json!({
                    "id": id,
                    "goal": goal,
                    "slots": recipe.slots,
                    "exemplars": picks.iter().map(|&j| pool[j].id.clone()).collect::<Vec<_>>(),
                    "prompt": prompt,
                }));
            }
            run.output("prompts.jsonl", to_jsonl(&prompts));
            if scorer.is_some() {
                run.output("plans.jsonl", to_jsonl(&plans));
                run.output("errors.jsonl", to_jsonl(&errors));
            }
            println!("{}", json!({"prompts": prompts.len(), "plans": plans.len(), "unparseable": errors.len()}));
            Ok(())
        }
        DatagenTask::Goals {
            seed_goals,
            scorer,
            rounds,
            exemplars,
            prompts_per_round,
            sampling: s,
        } => {
            let goals = lines(&run.read(seed_goals)?);
            let pool = GoalPool::from_seed(&goals);
            let sc = scorer_from(scorer, run)?;
            let config = BootstrapConfig {
                rounds: *rounds,
                exemplars: *exemplars,
                prompts_per_round: *prompts_per_round,
                seed,
            };
            let params = sampling(s);
            run.effective(json!({"bootstrap": config, "sampling": params}));
            let (grown, report) = bootstrap_goals(&pool, completion_of(&sc)?, &config, &params).map_err(|e| match e {
                DatagenError::Invalid(_) => config_err(e),
                other => runtime_err(other),
            })?;
            run.output("goals.jsonl", grown.to_jsonl());
            run.output("bootstrap.json", serde_json::to_string_pretty(&report).unwrap() + "\n");
            println!("{}", json!({"goals": grown.len(), "added": report.added, "aborted_rounds": report.aborted.len()}));
            Ok(())
        }
        DatagenTask::Conditions {
            plans,
            scorer,
            template,
            sampling: s,
        } => {
            let text = run.read(plans)?;
            let sources = source_plans(&text, &plans.display().to_string())?;
            let template = template_from(template, PromptTemplate::condition(), run)?;
            let sc = scorer_from(scorer, run)?;
            let params = sampling(s);
            run.effective(json!({"sampling": params, "seed": seed, "template_slots": template.slots()}));
            let mut out = Vec::new();
            for (i, src) in sources.iter().enumerate() {
                let p = SamplingParams {
                    seed: SeedMixer::new(seed).str("datagen-conditions").u64(i as u64).finish(),
                    ..params
                };
                let sample =
                    sample_conditions(&src.goal, &src.plan, completion_of(&sc)?, &template, &p).map_err(runtime_err)?;
                out.push(json!({
                    "id": src.id,
                    "goal": src.goal.text(),
                    "conditions": sample.conditions,
                    "warnings": sample.warnings,
                }));
            }
            run.output("conditions.jsonl", to_jsonl(&out));
            println!("{}", json!({"plans": out.len()}));
            Ok(())
        }
        DatagenTask::Counterfactuals {
            records,
            scorer,
            template,
            sampling: s,
        } => {
            let text = run.read(records)?;
            let recs: Vec<InstanceRecord> = parse_jsonl(&text, &records.display().to_string())?;
            let template = template_from(template, PromptTemplate::counterfactual(), run)?;
            let sc = scorer_from(scorer, run)?;
            let params = sampling(s);
            run.effective(json!({"sampling": params, "seed": seed, "template_slots": template.slots()}));
            let mut revised = Vec::new();
            let mut errors = Vec::new();
            for (i, r) in recs.iter().enumerate() {
                let bad = |e: &dyn std::fmt::Display| config_err(format!("record {}: {e}", r.id));
                let goal = Goal::new(r.id.clone(), &r.goal).map_err(|e| bad(&e))?;
                let plan = Plan::from_texts(r.plan.as_deref().ok_or_else(|| bad(&"no plan"))?).map_err(|e| bad(&e))?;
                let condition =
                    Condition::new(r.condition.as_deref().ok_or_else(|| bad(&"no condition"))?, None).map_err(|e| bad(&e))?;
                let p = SamplingParams {
                    seed: SeedMixer::new(seed).str("datagen-counterfactuals").u64(i as u64).finish(),
                    ..params
                };
                match sample_counterfactual(&goal, &plan, &condition, completion_of(&sc)?, &template, &p) {
                    Ok(new_plan) => revised.push(json!({
                        "id": r.id,
                        "goal": r.goal,
                        "condition": condition.text(),
                        "plan": plan.texts(),
                        "revised": new_plan.texts(),
                    })),
                    Err(DatagenError::Unparseable { raw, reason }) => {
                        errors.push(json!({"id": r.id, "error": reason, "raw": raw}))
                    }
                    Err(e) => return Err(runtime_err(e)),
                }
            }
            run.output("revised.jsonl", to_jsonl(&revised));
            run.output("errors.jsonl", to_jsonl(&errors));
            println!("{}", json!({"revised": revised.len(), "unparseable": errors.len()}));
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// eval-embodied

fn eval_embodied(a: &EvalArgs, run: &mut Run) -> Result<(), Failure> {
    let env = match &a.env {
        Some(p) => MiniEnv::from_json(&run.read(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => {
            run.record("bundled:household-env", HOUSEHOLD_ENV.as_bytes());
            MiniEnv::household()
        }
    };
    let golds: Vec<GoldProgram> = match &a.gold {
        Some(p) => parse_gold(&run.read(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => {
            run.record("bundled:household-gold", HOUSEHOLD_GOLD.as_bytes());
            household_gold()
        }
    };
    let vocab = env.vocab().map_err(config_err)?;
    let embedder: Box<dyn Embedder> = match &a.vectors {
        Some(p) => Box::new(VectorEmbedder::from_jsonl(&run.read(p)?).map_err(config_err)?),
        None => Box::new(TokenEmbedder),
    };
    let plans = if a.identity {
        surface_plans(&golds, &vocab).map_err(config_err)?
    } else {
        let path = a.plans.as_ref().ok_or_else(|| config_err("pass --plans or --identity"))?;
        let text = run.read(path)?;
        let records: Vec<InstanceRecord> = parse_jsonl(&text, &path.display().to_string())?;
        let mut by_id: HashMap<String, Plan> = HashMap::new();
        for r in records {
            let steps = r.plan.ok_or_else(|| config_err(format!("record {} has no plan", r.id)))?;
            let plan = Plan::from_texts(&steps).map_err(|e| config_err(format!("record {}: {e}", r.id)))?;
            by_id.insert(r.id, plan);
        }
        golds
            .iter()
            .map(|g| {
                by_id
                    .remove(&g.goal_id)
                    .map(|p| (g.goal_id.clone(), p))
                    .ok_or_else(|| config_err(format!("no plan for gold goal {}", g.goal_id)))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let config = EvalConfig {
        min_similarity: a.min_similarity,
    };
    run.effective(json!({"config": config, "vocab_size": vocab.len(), "golds": golds.len()}));
    let report = evaluate(&plans, &env, &vocab, &golds, embedder.as_ref(), &config).map_err(runtime_err)?;
    run.output("report.jsonl", report.to_jsonl());
    let summary = json!({
        "items": report.items.len(),
        "executability": report.executability,
        "mean_lcs": report.mean_lcs,
    });
    run.output("summary.json", serde_json::to_string_pretty(&summary).unwrap() + "\n");
    println!("{summary}");
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

fn fixture_suite(dir: &Path, alpha: f64, run: &mut Run) -> Result<Value, Failure> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| config_err(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(config_err(format!("no *.json worlds in {}", dir.display())));
    }
    let mut failures = Vec::new();
    for p in &paths {
        let world = MockWorld::from_json(&run.read(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
        let params = oracle_params(&world, alpha);
        let plans = enumerate_complete_plans(&world, alpha, params.epsilon);
        let best = bench::argmax_plans(&plans, 1e-12);
        let inst = PlanningInstance::planning("bench", world.goal().unwrap_or("reach the end of the tree"))
            .map_err(config_err)?;
        let bundle = ScorerBundle::from_shared(Arc::new(world));
        match decode(&inst, &bundle, &params) {
            Ok(out) if out.plan.is_terminal() && best.iter().any(|b| b.steps == out.plan.texts()) => {}
            Ok(out) => failures.push(format!("{}: decoded {:?}", p.display(), out.plan.texts())),
            Err(e) => failures.push(format!("{}: {e}", p.display())),
        }
    }
    Ok(json!({
        "suite": "fixtures",
        "cases": paths.len(),
        "passed": paths.len() - failures.len(),
        "failures": failures,
    }))
}

fn bench_cmd(a: &BenchArgs, global: &Global, run: &mut Run) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(config_err(format!("alpha must be in [0, 1], got {}", a.alpha)));
    }
    let seed = global.seed.unwrap_or(0);
    run.effective(json!({"suite": a.suite, "cases": a.cases, "alpha": a.alpha, "seed": seed}));
    let mut suites = Vec::new();
    if let Some(dir) = &a.fixtures {
        suites.push(fixture_suite(dir, a.alpha, run)?);
    }
    let start = Instant::now();
    if matches!(a.suite, Suite::Oracle | Suite::All) {
        let r = bench::oracle_suite(seed, a.cases.unwrap_or(200), a.alpha);
        suites.push(json!({"suite": r.suite, "cases": r.cases, "passed": r.passed, "failures": r.failures}));
    }
    if matches!(a.suite, Suite::Determinism | Suite::All) {
        let r = bench::determinism_suite(seed, a.cases.unwrap_or(50));
        suites.push(json!({"suite": r.suite, "cases": r.cases, "passed": r.passed, "failures": r.failures}));
    }
    let failed: usize = suites.iter().map(|s| s["failures"].as_array().map_or(0, Vec::len)).sum();
    for s in &suites {
        println!("{}", json!({"suite": s["suite"], "cases": s["cases"], "passed": s["passed"]}));
    }
    println!("{}", json!({"elapsed_s": start.elapsed().as_secs_f64()}));
    run.output("report.json", serde_json::to_string_pretty(&suites).unwrap() + "\n");
    if failed > 0 {
        return Err(runtime_err(format!("{failed} bench cases failed; see report.json")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// serve-mock

fn serve_mock(a: &ServeArgs, run: &mut Run, cli: &Cli) -> Result<(), Failure> {
    let text = run.read(&a.world)?;
    let world = Arc::new(MockWorld::from_json(&text).map_err(|e| config_err(format!("{}: {e}", a.world.display())))?);
    let bundle = ScorerBundle::from_shared(world.clone()).with_completion(world);
    let server = ScorerServer::start(bundle, &a.addr, a.workers).map_err(|e| runtime_err(format!("cannot bind {}: {e}", a.addr)))?;
    run.effective(json!({"url": server.url(), "workers": a.workers}));
    let config = serde_json::to_value(cli).expect("config serialises");
    let dir = run.finish(&cli.global.out_dir, config, None).map_err(Failure::Runtime)?;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "{}", json!({"url": server.url(), "run_dir": dir.display().to_string()}));
    let _ = stdout.flush();
    server.join();
    std::process::exit(0);
}
