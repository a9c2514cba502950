mod common;

use apca::client::{
    assess_batch, assess_with_resample, complete, Completer, EndpointClient, MockResponse, MockScript, MockServer,
};
use apca::prompt::{default_template, RenderedPrompt};
use apca::{Error, PatchSample, Verdict};
use common::{endpoint, well_formed};

fn prompt(id: &str) -> RenderedPrompt {
    RenderedPrompt {
        text: "assess this".into(),
        sample_id: id.into(),
    }
}

fn sample(id: &str) -> PatchSample {
    PatchSample::new(id, "return a;\n", "return b;\n", Verdict::Correct)
}

#[test]
fn canned_text_comes_back_verbatim() {
    let text = "  <think>x</think>\n<answer>fixed</answer>\n\n";
    let server = MockServer::start(MockScript::new().with_texts("s", [text, ""]), 0).unwrap();
    let cfg = endpoint(&server.base_url());
    assert_eq!(complete(&cfg, &prompt("s")).unwrap(), text);
    assert_eq!(complete(&cfg, &prompt("s")).unwrap(), "");
}

#[test]
fn unknown_sample_id_is_a_404() {
    let server = MockServer::start(MockScript::new().with_texts("known", ["x"]), 0).unwrap();
    match complete(&endpoint(&server.base_url()), &prompt("unknown")) {
        Err(Error::Http { status, body }) => {
            assert_eq!(status, 404);
            assert!(body.contains("unknown"), "{body}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn error_status_carries_the_body() {
    let script = MockScript::new().with(
        "s",
        [MockResponse::Status {
            status: 503,
            body: "overloaded".into(),
        }],
    );
    let server = MockServer::start(script, 0).unwrap();
    match complete(&endpoint(&server.base_url()), &prompt("s")) {
        Err(Error::Http { status: 503, body }) => assert_eq!(body, "overloaded"),
        other => panic!("{other:?}"),
    }
    // Status errors are not retried.
    assert_eq!(server.served("s"), 1);
}

#[test]
fn unreachable_host_fails_after_all_retries() {
    // Bind then drop a listener so the port is very likely closed.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = endpoint(&format!("http://127.0.0.1:{port}"));
    match complete(&cfg, &prompt("s")) {
        Err(Error::Transport(msg)) => assert!(msg.contains("after 3 tries"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn exhausted_script_repeats_the_last_entry() {
    let server = MockServer::start(MockScript::new().with_texts("s", ["one", "two"]), 0).unwrap();
    let client = EndpointClient::new(endpoint(&server.base_url())).unwrap();
    let got: Vec<String> = (0..4).map(|_| client.complete(&prompt("s")).unwrap()).collect();
    assert_eq!(got, ["one", "two", "two", "two"]);
}

#[test]
fn api_key_is_sent_as_bearer() {
    // The mock ignores auth; this checks the request still goes through with a key set.
    std::env::set_var("APCA_TEST_KEY", "secret");
    let server = MockServer::start(MockScript::new().with_texts("s", ["ok"]), 0).unwrap();
    let mut cfg = endpoint(&server.base_url());
    cfg.api_key_env_var = "APCA_TEST_KEY".into();
    assert_eq!(cfg.api_key().as_deref(), Some("secret"));
    assert_eq!(complete(&cfg, &prompt("s")).unwrap(), "ok");
}

#[test]
fn resampling_traces() {
    let bad = "I think it is fine";
    let script = MockScript::new()
        .with_texts("retry", [bad.to_string(), well_formed("correct")])
        .with_texts("once", [well_formed("overfitting")])
        .with_texts("never", [bad, bad, bad, "unused"])
        .with(
            "flaky",
            [
                MockResponse::Status {
                    status: 500,
                    body: "boom".into(),
                },
                MockResponse::Content(well_formed("wrong")),
            ],
        );
    let server = MockServer::start(script, 0).unwrap();
    let client = EndpointClient::new(endpoint(&server.base_url())).unwrap();
    let t = default_template();

    let r = assess_with_resample(&client, &sample("retry"), &t);
    assert_eq!((r.attempts, r.verdict), (2, Some(Verdict::Correct)));

    let r = assess_with_resample(&client, &sample("once"), &t);
    assert_eq!((r.attempts, r.verdict), (1, Some(Verdict::Overfitting)));

    let r = assess_with_resample(&client, &sample("never"), &t);
    assert_eq!((r.attempts, r.verdict, r.unresolved), (3, None, true));
    assert_eq!(server.served("never"), 3);

    let r = assess_with_resample(&client, &sample("flaky"), &t);
    assert_eq!((r.attempts, r.verdict), (2, Some(Verdict::Overfitting)));
    assert!(r.errors[0].as_deref().unwrap().contains("500"));
    assert_eq!(r.raw_outputs[0], "");
}

#[test]
fn batch_preserves_order_and_isolates_failures() {
    let mut script = MockScript::new();
    let samples: Vec<PatchSample> = (0..10).map(|i| sample(&format!("b{i}"))).collect();
    for (i, s) in samples.iter().enumerate() {
        script = if i == 6 {
            script.with_texts(&s.id, ["no tags"])
        } else {
            let kw = if i % 2 == 0 { "correct" } else { "incorrect" };
            script.with_texts(&s.id, [well_formed(kw)])
        };
    }
    let t = default_template();
    let server = MockServer::start(script.clone(), 0).unwrap();
    let client = EndpointClient::new(endpoint(&server.base_url())).unwrap();
    let parallel = assess_batch(&client, &samples, &t, 4).unwrap();

    let server = MockServer::start(script, 0).unwrap();
    let client = EndpointClient::new(endpoint(&server.base_url())).unwrap();
    let serial = assess_batch(&client, &samples, &t, 1).unwrap();

    let strip = |rs: &[apca::client::AssessmentRecord]| {
        rs.iter()
            .map(|r| (r.sample_id.clone(), r.attempts, r.verdict, r.raw_outputs.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&parallel), strip(&serial));
    let ids: Vec<&str> = parallel.iter().map(|r| r.sample_id.as_str()).collect();
    let want: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, want);
    assert_eq!(parallel.iter().filter(|r| r.verdict.is_some()).count(), 9);
    assert!(parallel[6].unresolved);
    for r in &parallel {
        r.validate(client.max_resamples()).unwrap();
    }

    assert!(assess_batch(&client, &[], &t, 4).unwrap().is_empty());
    assert!(assess_batch(&client, &samples, &t, 0).is_err());
}
