use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use stance_calib::llm_gateway::*;

fn fast() -> GatewayConfig {
    GatewayConfig {
        max_in_flight: 4,
        retry: RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(8),
        },
        min_interval: Duration::ZERO,
    }
}

fn echo() -> ScriptedProvider {
    ScriptedProvider::with_responder(|r| Some(format!("echo: {}", r.prompt)))
}

#[test]
fn warm_cache_makes_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let provider = Arc::new(echo());
    let gw = Gateway::new(provider.clone(), dir.path(), fast()).unwrap();
    let req = Decoding::new(DEFAULT_INFERENCE_MODEL).request("hello");
    let first = gw.complete(&req).unwrap();
    assert!(!first.cached);
    let second = gw.complete(&req).unwrap();
    assert!(second.cached);
    assert_eq!(second.raw_text, first.raw_text);
    assert_eq!(provider.calls(), 1);

    // a fresh gateway over the same directory also hits
    let provider2 = Arc::new(echo());
    let gw2 = Gateway::new(provider2.clone(), dir.path(), fast()).unwrap();
    assert!(gw2.complete(&req).unwrap().cached);
    assert_eq!(provider2.calls(), 0);
}

#[test]
fn rate_limit_is_retried_then_cached() {
    let dir = tempfile::tempdir().unwrap();
    let provider = Arc::new(echo());
    provider.push_fault(ProviderFailure::status(429, "slow down"));
    provider.push_fault(ProviderFailure::status(429, "slow down"));
    let gw = Gateway::new(provider.clone(), dir.path(), fast()).unwrap();
    let r = gw.complete(&LlmRequest::new("m", "x")).unwrap();
    assert_eq!(r.raw_text, "echo: x");
    assert_eq!(provider.calls(), 3);
    assert_eq!(gw.cache().digests().unwrap().len(), 1);
}

#[test]
fn fan_out_is_bounded_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let provider = Arc::new(ScriptedProvider::with_responder(|r| {
        thread::sleep(Duration::from_millis(5));
        Some(r.prompt.to_uppercase())
    }));
    let gw = Gateway::new(provider, dir.path(), fast()).unwrap();
    let reqs: Vec<LlmRequest> = (0..40).map(|i| LlmRequest::new("m", format!("p{i}"))).collect();
    let out = gw.complete_all(&reqs);
    for (i, r) in out.iter().enumerate() {
        assert_eq!(r.as_ref().unwrap().raw_text, format!("P{i}"));
    }
    assert!(gw.peak_in_flight() <= 4);
    assert!(gw.peak_in_flight() > 1);
}

#[test]
fn identical_concurrent_requests_dispatch_once() {
    let dir = tempfile::tempdir().unwrap();
    let provider = Arc::new(ScriptedProvider::with_responder(|_| {
        thread::sleep(Duration::from_millis(20));
        Some("same".into())
    }));
    let gw = Gateway::new(provider.clone(), dir.path(), fast()).unwrap();
    let reqs = vec![LlmRequest::new("m", "dup"); 8];
    let out = gw.complete_all(&reqs);
    assert!(out.iter().all(|r| r.as_ref().unwrap().raw_text == "same"));
    assert_eq!(provider.calls(), 1);
}

#[test]
fn cache_entries_round_trip_into_a_scripted_provider() {
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(Arc::new(echo()), dir.path(), fast()).unwrap();
    let req = LlmRequest::new("m", "replay me").with_seed(3);
    gw.complete(&req).unwrap();
    let replay = ScriptedProvider::from_cache_dir(dir.path()).unwrap();
    assert_eq!(replay.send(&req).unwrap(), "echo: replay me");
}

/// Serves `responses` in order, one connection each, and returns the raw requests.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body_in = vec![0u8; len];
            reader.read_exact(&mut body_in).unwrap();
            seen.push(format!("{head}{}", String::from_utf8_lossy(&body_in)));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (addr, handle)
}

#[test]
fn http_provider_speaks_chat_completions() {
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"```json {\"stance\":\"favor\"}```"}}]}"#;
    let (base, handle) = serve(vec![(429, "{}".into()), (200, ok.into())]);
    let provider = Arc::new(HttpProvider::new(base, Some("test-key".into()), Duration::from_secs(5)));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(provider, dir.path(), fast()).unwrap();
    let req = Decoding::new(DEFAULT_INFERENCE_MODEL).request("Is this favor?");
    let r = gw.complete(&req).unwrap();
    assert_eq!(r.raw_text, "```json {\"stance\":\"favor\"}```");
    let seen = handle.join().unwrap();
    assert_eq!(seen.len(), 2);
    let last = &seen[1];
    assert!(last.starts_with("POST /chat/completions"));
    assert!(last.to_ascii_lowercase().contains("authorization: bearer test-key"));
    assert!(last.contains("\"model\":\"gpt-3.5-turbo-0125\""));
    assert!(last.contains("\"seed\":0"));
    assert!(last.contains("Is this favor?"));
}

#[test]
fn http_client_errors_are_not_retried() {
    let (base, handle) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let provider = Arc::new(HttpProvider::new(base, None, Duration::from_secs(5)));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(provider, dir.path(), fast()).unwrap();
    let err = gw.complete(&LlmRequest::new("m", "x")).unwrap_err();
    assert!(matches!(err, GatewayError::ProviderError { status: Some(400), .. }));
    assert_eq!(handle.join().unwrap().len(), 1);
}

#[test]
fn min_interval_paces_dispatches() {
    let dir = tempfile::tempdir().unwrap();
    let stamps = Arc::new(std::sync::Mutex::new(Vec::new()));
    let s2 = stamps.clone();
    let provider = Arc::new(ScriptedProvider::with_responder(move |_| {
        s2.lock().unwrap().push(std::time::Instant::now());
        Some("ok".into())
    }));
    let config = GatewayConfig {
        min_interval: Duration::from_millis(15),
        ..fast()
    };
    let gw = Gateway::new(provider, dir.path(), config).unwrap();
    let reqs: Vec<LlmRequest> = (0..5).map(|i| LlmRequest::new("m", format!("{i}"))).collect();
    gw.complete_all(&reqs);
    let mut t = stamps.lock().unwrap().clone();
    t.sort();
    for w in t.windows(2) {
        assert!(w[1] - w[0] >= Duration::from_millis(14));
    }
}
