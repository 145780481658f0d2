//! Golden-fixture tests pinning the wire format of the OpenAI-compatible
//! chat-completions protocol. The request fixture is compared byte for byte;
//! the response fixtures carry the extra fields real endpoints send, which
//! the decoder must tolerate.

use textprobe::provider::wire::{decode_response, encode_request};
use textprobe::provider::{FinishReason, GenerationParams};

fn fixture(name: &str) -> Vec<u8> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read(path).expect("fixture exists")
}

fn golden_params() -> GenerationParams {
    GenerationParams {
        model: "probe-1".into(),
        temperature: 0.0,
        max_tokens: 50,
        prompt_template: "Please complete the following text: {prefix}".into(),
        system_message: Some("You are a completion engine.".into()),
    }
}

#[test]
fn request_encoding_matches_golden_bytes() {
    let params = golden_params();
    let body = encode_request(&params, &params.render_prompt("the quick brown fox"));
    let mut golden = fixture("golden_request.json");
    while golden.last() == Some(&b'\n') {
        golden.pop();
    }
    assert_eq!(
        body,
        golden,
        "encoded request drifted from the golden fixture:\n{}",
        String::from_utf8_lossy(&body)
    );
}

#[test]
fn response_decoding_accepts_golden_stop() {
    let (text, reason) = decode_response("golden", &fixture("golden_response.json")).unwrap();
    assert_eq!(text, "jumps over the lazy dog");
    assert_eq!(reason, FinishReason::Stop);
}

#[test]
fn response_decoding_accepts_golden_length() {
    let (text, reason) =
        decode_response("golden", &fixture("golden_response_length.json")).unwrap();
    assert_eq!(text, "jumps over the");
    assert_eq!(reason, FinishReason::Length);
}

#[test]
fn response_with_zero_choices_is_malformed() {
    let err = decode_response("golden", &fixture("golden_response_empty.json")).unwrap_err();
    let message = err.to_string();
    assert!(
        message.contains("zero choices"),
        "unexpected error: {message}"
    );
    assert!(!err.is_retryable());
}
