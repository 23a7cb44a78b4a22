//! The LLM gateway against a scripted provider: retries on 429, a
//! content-addressed cache, and bounded fan-out.
//!
//! ```text
//! cargo run --example gateway_cache
//! ```

use std::sync::Arc;
use std::time::{Duration, Instant};

use stance_calib::llm_gateway::{Decoding, Gateway, GatewayConfig, ProviderFailure, RetryPolicy, ScriptedProvider};

fn main() -> anyhow::Result<()> {
    let cache = tempfile::tempdir()?;
    let provider = Arc::new(ScriptedProvider::with_responder(|r| {
        std::thread::sleep(Duration::from_millis(10));
        Some(format!("{{\"stance\": \"neutral\", \"echo\": {}}}", r.prompt.len()))
    }));
    provider.push_fault(ProviderFailure::status(429, "rate limited"));
    let config = GatewayConfig {
        max_in_flight: 4,
        retry: RetryPolicy {
            base_delay: Duration::from_millis(20),
            ..RetryPolicy::default()
        },
        ..GatewayConfig::default()
    };
    let gateway = Gateway::new(provider.clone(), cache.path(), config)?;
    let decoding = Decoding::new("gpt-3.5-turbo-0125");

    let first = gateway.complete(&decoding.request("hello"))?;
    println!("first call: cached={} calls so far={}", first.cached, provider.calls());
    let again = gateway.complete(&decoding.request("hello"))?;
    println!("second call: cached={} calls so far={}", again.cached, provider.calls());

    let batch: Vec<_> = (0..16).map(|i| decoding.request(format!("prompt {i}"))).collect();
    let t = Instant::now();
    let results = gateway.complete_all(&batch);
    println!(
        "{} requests in {:?}, peak in flight {}, failures {}",
        results.len(),
        t.elapsed(),
        gateway.peak_in_flight(),
        results.iter().filter(|r| r.is_err()).count()
    );
    println!("cache holds {} entries", gateway.cache().digests()?.len());
    Ok(())
}
