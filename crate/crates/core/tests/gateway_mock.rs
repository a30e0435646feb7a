use std::sync::Arc;
use std::time::{Duration, Instant};

use visent::corpus::DatasetId;
use visent::gateway::mock::{MockResponse, MockRule, MockScript, MockServer};
use visent::gateway::{CaptionCache, Endpoint, EndpointConfig, GatewayError, ParseOutcome, RetryPolicy};
use visent::labeling::ProblemSetup;

const IMAGE: &[u8] = b"\x89PNG\r\n\x1a\nimage-a";

fn endpoint(base_url: &str, name: &str) -> Endpoint {
    let mut config = EndpointConfig::new(name, base_url);
    config.backoff_base_ms = 1;
    Endpoint::new(config).unwrap()
}

fn rule(contains: &str, responses: Vec<MockResponse>) -> MockRule {
    MockRule {
        contains: Some(contains.into()),
        image_sha256: None,
        responses,
    }
}

#[tokio::test]
async fn second_caption_call_is_served_from_cache() {
    let server = MockServer::start(MockScript::always("A sunny beach.")).await.unwrap();
    let ep = endpoint(&server.base_url(), "gpt4omini");
    let dir = tempfile::tempdir().unwrap();
    let cache = CaptionCache::open(&dir.path().join("c.jsonl")).unwrap();

    let first = ep.caption_image("img-a", IMAGE, &cache).await.unwrap();
    assert_eq!(first.caption_text, "A sunny beach.");
    assert_eq!(server.requests(), 1);
    let second = ep.caption_image("img-a", IMAGE, &cache).await.unwrap();
    assert_eq!(second, first);
    assert_eq!(server.requests(), 1);

    // Reopened from disk, still no request.
    drop(cache);
    let cache = CaptionCache::open(&dir.path().join("c.jsonl")).unwrap();
    ep.caption_image("img-a", IMAGE, &cache).await.unwrap();
    assert_eq!(server.requests(), 1);

    // Another model is another key.
    let other = endpoint(&server.base_url(), "deepseek-vl");
    other.caption_image("img-a", IMAGE, &cache).await.unwrap();
    assert_eq!(server.requests(), 2);
    assert_eq!(cache.len(), 2);
}

#[tokio::test]
async fn concurrent_callers_of_one_key_share_a_request() {
    let server = MockServer::start(MockScript {
        rules: vec![],
        fallback: vec![MockResponse::reply("A slow caption.").with_delay(50)],
    })
    .await
    .unwrap();
    let ep = endpoint(&server.base_url(), "m");
    let cache = Arc::new(CaptionCache::in_memory());
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (ep, cache) = (ep.clone(), cache.clone());
            tokio::spawn(async move { ep.caption_image("same", IMAGE, &cache).await.unwrap() })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap().caption_text, "A slow caption.");
    }
    assert_eq!(server.requests(), 1);
}

#[tokio::test]
async fn retries_then_succeeds() {
    let script = MockScript {
        rules: vec![rule(
            "Describe",
            vec![MockResponse::status(500), MockResponse::status(500), MockResponse::reply("Finally.")],
        )],
        fallback: vec![],
    };
    let server = MockServer::start(script).await.unwrap();
    let ep = endpoint(&server.base_url(), "m");
    let reply = ep.complete("Describe this image in details.", Some(IMAGE)).await.unwrap();
    assert_eq!(reply.text, "Finally.");
    assert_eq!(reply.retries, 2);
    assert_eq!(ep.stats().retries, 2);
    assert_eq!(server.requests(), 3);
}

#[tokio::test]
async fn exhausted_retries_surface_the_cause() {
    let script = MockScript {
        rules: vec![
            rule("busy", vec![MockResponse::status(429)]),
            rule("broken", vec![MockResponse::status(502)]),
            rule("denied", vec![MockResponse::status(401)]),
            rule("bad", vec![MockResponse::status(400)]),
        ],
        fallback: vec![],
    };
    let server = MockServer::start(script).await.unwrap();
    let ep = endpoint(&server.base_url(), "m");
    assert!(matches!(ep.complete("busy", None).await, Err(GatewayError::RateLimited { attempts: 4 })));
    assert!(matches!(ep.complete("broken", None).await, Err(GatewayError::Transport { attempts: 4, .. })));
    let before = server.requests();
    assert!(matches!(ep.complete("denied", None).await, Err(GatewayError::Auth(_))));
    assert!(matches!(ep.complete("bad", None).await, Err(GatewayError::Http { status: 400, .. })));
    assert_eq!(server.requests() - before, 2);
}

#[tokio::test]
async fn retry_after_is_honoured() {
    let mut limited = MockResponse::status(429);
    limited.retry_after = Some(1);
    let script = MockScript {
        rules: vec![rule("x", vec![limited, MockResponse::reply("ok")])],
        fallback: vec![],
    };
    let server = MockServer::start(script).await.unwrap();
    let ep = endpoint(&server.base_url(), "m");
    let start = Instant::now();
    ep.complete("x", None).await.unwrap();
    assert!(start.elapsed() >= Duration::from_millis(950));
}

#[tokio::test]
async fn in_flight_requests_respect_the_bound() {
    let server = MockServer::start(MockScript {
        rules: vec![],
        fallback: vec![MockResponse::reply("Neutral").with_delay(30)],
    })
    .await
    .unwrap();
    let mut config = EndpointConfig::new("m", server.base_url());
    config.max_concurrency = 3;
    let ep = Endpoint::new(config).unwrap();
    let tasks: Vec<_> = (0..20)
        .map(|i| {
            let ep = ep.clone();
            tokio::spawn(async move { ep.complete(&format!("prompt {i}"), None).await.unwrap() })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    assert_eq!(server.requests(), 20);
    assert!(server.max_in_flight() <= 3, "{}", server.max_in_flight());
    assert!(server.max_in_flight() >= 2);
}

#[tokio::test]
async fn task1_request_shape_and_parsing() {
    let script = MockScript::by_image([(IMAGE, "Slightly Negative.".to_string())]);
    let server = MockServer::start(script).await.unwrap();
    let ep = endpoint(&server.base_url(), "gpt4omini");
    let setup = ProblemSetup::from_key(DatasetId::Percept5, "s3p5").unwrap();
    let parse = ep.classify_image(IMAGE, &setup).await.unwrap();
    assert_eq!(parse.outcome, ParseOutcome::Label(3));

    let body = &server.received()[0];
    assert_eq!(body["model"], "gpt4omini");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["max_tokens"], 300);
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content[0]["type"], "text");
    assert!(content[0]["text"].as_str().unwrap().starts_with("Analyze this image, and classify it as {positive, slightly positive"));
    assert!(content[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));

    // Unscripted image: the mock has no rule and answers 404.
    let other = ep.classify_image(b"\xff\xd8\xffother", &setup).await;
    assert!(matches!(other, Err(GatewayError::Http { status: 404, .. })));
}

#[tokio::test]
async fn missing_token_sends_nothing() {
    let server = MockServer::start(MockScript::always("x")).await.unwrap();
    let mut config = EndpointConfig::new("m", server.base_url());
    config.auth_env_var = Some("VISENT_TEST_TOKEN_THAT_IS_NOT_SET".into());
    let ep = Endpoint::new(config).unwrap().with_retry_policy(RetryPolicy {
        max_retries: 0,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(1),
        jitter: false,
    });
    assert!(matches!(ep.complete("x", None).await, Err(GatewayError::Auth(_))));
    assert_eq!(server.requests(), 0);
}
