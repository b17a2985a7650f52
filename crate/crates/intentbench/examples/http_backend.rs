//! The OpenAI-compatible HTTP backend against a throwaway local stub server,
//! including a transient failure that the retry policy absorbs.
//!
//! ```bash
//! cargo run -p intentbench --example http_backend
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use intentbench::backend::http::{HttpBackendConfig, OpenAiChatBackend};
use intentbench::backend::{BackendRequest, ChatBackend, ChatMessage, MessagePart};
use intentbench::types::RetryPolicy;

/// Serves scripted (status, body) pairs on a random local port, one request
/// per connection.
fn spawn_stub(script: Vec<(u16, String)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).ok();

            let (status, payload) = script.get(i).or_else(|| script.last()).cloned().unwrap();
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(response.as_bytes()).ok();
        }
    });
    base_url
}

fn main() {
    let ok_body = serde_json::json!({
        "choices": [{
            "message": {"role": "assistant", "content": "B. heat water for tea"},
            "finish_reason": "stop"
        }],
        "usage": {"prompt_tokens": 41, "completion_tokens": 7}
    })
    .to_string();

    // first attempt gets a 500, the retry succeeds
    let base_url = spawn_stub(vec![(500, "{}".into()), (200, ok_body)]);
    println!("stub server at {base_url}");

    let backend = OpenAiChatBackend::new(
        "demo",
        HttpBackendConfig {
            base_url,
            model_id: "demo-vlm".into(),
            api_key_env: None,
            supports_logprobs: false,
            retry: RetryPolicy { max_retries: 3, base_delay_ms: 50, factor: 2.0, timeout_s: 10 },
        },
    )
    .unwrap();

    let request = BackendRequest::new(
        "demo-vlm",
        vec![
            ChatMessage::system("You watch short clips and answer questions."),
            ChatMessage::user(vec![MessagePart::Text(
                "What is the person at the stove trying to do?".into(),
            )]),
        ],
    );
    let response = backend.complete(&request).unwrap();
    println!("completion: {:?}", response.text);
    println!(
        "usage: {} prompt + {} completion tokens, {} ms",
        response.usage.prompt_tokens, response.usage.completion_tokens, response.latency_ms
    );
}
