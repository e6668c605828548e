use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use readmiscue::backends::http::{HttpAsr, HttpChat, RetryPolicy};
use readmiscue::backends::{AsrBackend, BackendError, ChatBackend, ChatParams, TranscriptionRequest};

struct Captured {
    head: String,
    body: Vec<u8>,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Captured>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let len = head
                .lines()
                .find_map(|l| {
                    let (k, v) = l.split_once(':')?;
                    k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse::<usize>().unwrap())
                })
                .unwrap_or(0);
            let mut req_body = vec![0; len];
            reader.read_exact(&mut req_body).unwrap();
            log.lock().unwrap().push(Captured { head, body: req_body });
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen, handle)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 2,
        initial_backoff: Duration::from_millis(1),
        timeout: Duration::from_secs(10),
    }
}

fn audio_request(prompt: Option<&str>) -> (tempfile::NamedTempFile, TranscriptionRequest) {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(b"RIFF-fake-audio").unwrap();
    let req = TranscriptionRequest {
        record_id: "r1".into(),
        audio_ref: Some(file.path().to_string_lossy().into_owned()),
        prompt: prompt.map(str::to_string),
        model_id: "whisper-large-v2".into(),
    };
    (file, req)
}

#[test]
fn transcription_sends_prompt_and_key() {
    let (url, seen, handle) = serve(vec![(200, r#"{"text":"Het is zondag."}"#)]);
    let asr = HttpAsr::new(url, Some("sekrit".into()), fast_retry()).unwrap();
    let (_file, req) = audio_request(Some("h het is zondag"));
    assert_eq!(asr.transcribe_text(&req).unwrap(), "Het is zondag.");
    handle.join().unwrap();
    let seen = seen.lock().unwrap();
    let head = seen[0].head.to_ascii_lowercase();
    assert!(head.starts_with("post /v1/audio/transcriptions"));
    assert!(head.contains("authorization: bearer sekrit"));
    let body = String::from_utf8_lossy(&seen[0].body);
    assert!(body.contains("h het is zondag"));
    assert!(body.contains("whisper-large-v2"));
    assert!(body.contains("RIFF-fake-audio"));
}

#[test]
fn transient_errors_are_retried() {
    let (url, seen, handle) = serve(vec![(503, "{}"), (429, "{}"), (200, r#"{"text":"ok"}"#)]);
    let asr = HttpAsr::new(url, None, fast_retry()).unwrap();
    let (_file, req) = audio_request(None);
    assert_eq!(asr.transcribe_text(&req).unwrap(), "ok");
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(!String::from_utf8_lossy(&seen.lock().unwrap()[0].body).contains("name=\"prompt\""));
}

#[test]
fn retries_are_bounded() {
    let (url, seen, handle) = serve(vec![(500, "{}"), (500, "{}"), (500, "boom")]);
    let asr = HttpAsr::new(url, None, fast_retry()).unwrap();
    let (_file, req) = audio_request(None);
    assert!(matches!(asr.transcribe_text(&req), Err(BackendError::Http { status: 500, .. })));
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_failures_are_not_retried() {
    let (url, seen, handle) = serve(vec![(401, r#"{"error":"bad key"}"#)]);
    let chat = HttpChat::new(url, Some("wrong".into()), fast_retry()).unwrap();
    let err = chat.complete("hallo", &ChatParams::default()).unwrap_err();
    assert_eq!(err, BackendError::Auth { status: 401 });
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn chat_body_and_reply_parsing() {
    let reply = r#"{"choices":[{"message":{"role":"assistant","content":"```text\nhet is zondag\n```"}}]}"#;
    let (url, seen, handle) = serve(vec![(200, reply)]);
    let chat = HttpChat::new(url, None, fast_retry()).unwrap();
    let params = ChatParams {
        model_id: "m1".into(),
        temperature: 0.0,
        max_tokens: 64,
        context_limit: None,
    };
    assert_eq!(chat.complete("prompt text", &params).unwrap(), "```text\nhet is zondag\n```");
    handle.join().unwrap();
    let seen = seen.lock().unwrap();
    assert!(seen[0].head.starts_with("POST /v1/chat/completions"));
    let body: serde_json::Value = serde_json::from_slice(&seen[0].body).unwrap();
    assert_eq!(body["model"], "m1");
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["messages"][0]["content"], "prompt text");
}

#[test]
fn context_length_and_malformed_replies() {
    let (url, _seen, handle) = serve(vec![
        (400, r#"{"error":{"code":"context_length_exceeded"}}"#),
        (200, r#"{"choices":[]}"#),
        (200, "not json"),
    ]);
    let chat = HttpChat::new(url, None, fast_retry()).unwrap();
    let params = ChatParams::default();
    assert!(matches!(chat.complete("p", &params), Err(BackendError::ContextLength { .. })));
    assert!(matches!(chat.complete("p", &params), Err(BackendError::Malformed(_))));
    assert!(matches!(chat.complete("p", &params), Err(BackendError::Malformed(_))));
    handle.join().unwrap();
}

#[test]
fn missing_audio_is_reported_without_a_request() {
    let asr = HttpAsr::new("http://127.0.0.1:9", None, fast_retry()).unwrap();
    let mut req = audio_request(None).1;
    req.audio_ref = None;
    assert!(matches!(asr.transcribe_text(&req), Err(BackendError::Audio(_))));
    req.audio_ref = Some("/nonexistent/clip.wav".into());
    assert!(matches!(asr.transcribe_text(&req), Err(BackendError::Audio(_))));
}
