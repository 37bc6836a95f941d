use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use plangen_core::plan::{Goal, PlanningInstance, Step};
use plangen_core::scorer::mock::{MockWorld, NodeSpec, ScriptedCompletion};
use plangen_core::scorer::remote::{remote_bundle, RetryPolicy};
use plangen_core::scorer::server::ScorerServer;
use plangen_core::scorer::{DecodingMethod, SamplingParams, ScorerBundle, ScorerError, Verifier};

fn tea() -> Arc<MockWorld> {
    let spec = |step: &str, prob: f64, validity: f64| NodeSpec {
        step: step.into(),
        prob,
        validity,
    };
    Arc::new(
        MockWorld::from_entries(
            Some("make tea".into()),
            vec![
                (vec![0], spec("boil water", 0.6, 0.9)),
                (vec![1], spec("buy tea", 0.4, 0.5)),
                (vec![0, 0], spec("steep tea", 1.0, 1.0)),
            ],
        )
        .unwrap()
        .with_completions(vec![ScriptedCompletion {
            contains: "Goal:".into(),
            text: "Step 1: boil water".into(),
        }]),
    )
}

fn serve(bundle: ScorerBundle) -> ScorerServer {
    ScorerServer::start(bundle, "127.0.0.1:0", 2).unwrap()
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(5),
        multiplier: 2,
    }
}

fn post_raw(url: &str, body: &str) -> (u16, Value) {
    match ureq::post(url).set("Content-Type", "application/json").send_string(body) {
        Ok(r) => (r.status(), serde_json::from_str(&r.into_string().unwrap()).unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, serde_json::from_str(&r.into_string().unwrap()).unwrap()),
        Err(e) => panic!("transport error: {e}"),
    }
}

#[test]
fn remote_calls_match_in_process_calls() {
    let world = tea();
    let local = ScorerBundle::from_shared(world.clone()).with_completion(world.clone());
    let server = serve(local.clone());
    let remote = remote_bundle(&server.url(), Duration::from_secs(5), fast_retry());

    let inst = PlanningInstance::planning("x", "make tea").unwrap();
    let prefix = vec![Step::new(1, "boil water").unwrap()];
    for method in [
        DecodingMethod::Greedy { seed: 0 },
        DecodingMethod::Nucleus {
            top_p: 0.9,
            temperature: 1.0,
            seed: 3,
        },
    ] {
        for p in [&[][..], &prefix[..]] {
            assert_eq!(
                remote.proposer.propose(&inst, p, 3, &method).unwrap(),
                local.proposer.propose(&inst, p, 3, &method).unwrap()
            );
        }
    }
    assert_eq!(
        remote.likelihood.loglik(&inst, &prefix).unwrap(),
        local.likelihood.loglik(&inst, &prefix).unwrap()
    );
    let goal = Goal::new("g", "make tea").unwrap();
    let cand = Step::new(2, "steep tea").unwrap();
    assert_eq!(
        remote.verifier.verify(&goal, &prefix, &cand).unwrap(),
        local.verifier.verify(&goal, &prefix, &cand).unwrap()
    );
    let text = remote
        .completion
        .as_ref()
        .unwrap()
        .complete("Goal: make tea\nStep 1:", &SamplingParams::default())
        .unwrap();
    assert_eq!(text, "Step 1: boil water");
}

#[test]
fn malformed_requests_get_errors_and_server_stays_up() {
    let server = serve(ScorerBundle::from_shared(tea()));
    let base = server.url();

    let (code, body) = post_raw(&format!("{base}/v1/verify"), "{not json");
    assert_eq!(code, 400);
    assert!(body["error"].as_str().unwrap().contains("malformed"));

    let (code, _) = post_raw(&format!("{base}/v1/verify"), r#"{"goal": "make tea"}"#);
    assert_eq!(code, 400);

    let (code, body) = post_raw(
        &format!("{base}/v1/propose"),
        r#"{"task":"planning","goal":"make tea","prefix_steps":[],"n":2,"method":{"kind":"nucleus","top_p":1.5}}"#,
    );
    assert_eq!(code, 400);
    assert_eq!(body["field"], "method");

    let (code, _) = post_raw(
        &format!("{base}/v1/verify"),
        r#"{"goal":"make tea","prefix_steps":["fly to the moon"],"candidate_step":"steep tea"}"#,
    );
    assert_eq!(code, 422);

    let (code, _) = post_raw(&format!("{base}/v1/nothing"), "{}");
    assert_eq!(code, 404);

    let (code, _) = post_raw(&format!("{base}/v1/complete"), r#"{"prompt":"x","max_tokens":5,"top_p":1,"temperature":1,"seed":0}"#);
    assert_eq!(code, 501);

    match ureq::get(&format!("{base}/v1/verify")).call() {
        Err(ureq::Error::Status(code, _)) => assert_eq!(code, 405),
        other => panic!("expected 405, got {other:?}"),
    }

    let (code, body) = post_raw(
        &format!("{base}/v1/verify"),
        &json!({"goal": "make tea", "prefix_steps": ["boil water"], "candidate_step": "steep tea"}).to_string(),
    );
    assert_eq!(code, 200);
    assert_eq!(body["validity"], 1.0);
}

struct Flaky {
    inner: Arc<MockWorld>,
    failures_left: AtomicUsize,
}

impl Verifier for Flaky {
    fn verify(&self, goal: &Goal, prefix: &[Step], candidate: &Step) -> Result<f64, ScorerError> {
        if self
            .failures_left
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ScorerError::Unavailable {
                endpoint: "model".into(),
                attempts: 1,
                message: "warming up".into(),
            });
        }
        self.inner.verify(goal, prefix, candidate)
    }
}

#[test]
fn server_errors_are_retried() {
    let world = tea();
    let flaky = Arc::new(Flaky {
        inner: world.clone(),
        failures_left: AtomicUsize::new(2),
    });
    let server = serve(ScorerBundle::from_shared(world).with_verifier(flaky));
    let remote = remote_bundle(&server.url(), Duration::from_secs(5), fast_retry());
    let goal = Goal::new("g", "make tea").unwrap();
    let v = remote
        .verifier
        .verify(&goal, &[], &Step::new(1, "boil water").unwrap())
        .unwrap();
    assert_eq!(v, 0.9);
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(ScorerBundle::from_shared(tea()));
    let remote = remote_bundle(&server.url(), Duration::from_secs(5), fast_retry());
    let goal = Goal::new("g", "make tea").unwrap();
    let err = remote
        .verifier
        .verify(&goal, &[], &Step::new(1, "fly to the moon").unwrap())
        .unwrap_err();
    assert!(matches!(err, ScorerError::Protocol { .. }), "{err:?}");
    assert!(err.to_string().contains("422"));
}

#[test]
fn exhausted_retries_report_unavailable() {
    let world = tea();
    let flaky = Arc::new(Flaky {
        inner: world.clone(),
        failures_left: AtomicUsize::new(100),
    });
    let server = serve(ScorerBundle::from_shared(world).with_verifier(flaky));
    let remote = remote_bundle(&server.url(), Duration::from_secs(5), fast_retry());
    let goal = Goal::new("g", "make tea").unwrap();
    let err = remote
        .verifier
        .verify(&goal, &[], &Step::new(1, "boil water").unwrap())
        .unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable { attempts: 3, .. }), "{err:?}");
}
