mod common;

use std::time::Duration;

use common::{check_golden, golden_dir, health_ok, MockJudge, Reply};
use tides_core::judge::{
    decode_f32_b64, encode_f32_b64, Judge, JudgeError, JudgeImage, JudgeRequest, JudgeResponse, RemoteJudge,
};

const PROMPT: &str = "a large arch, dark black outline";

fn fixture_image() -> JudgeImage {
    JudgeImage::new(4, 3, (0..12).map(|k| k as f64 / 11.0).collect()).unwrap()
}

fn fixture_response() -> JudgeResponse {
    let grad: Vec<f64> = (0..12).map(|k| (k as f64 - 6.0) / 64.0).collect();
    JudgeResponse {
        score: 0.25,
        grad_b64: encode_f32_b64(&grad),
        grad_width: 4,
        grad_height: 3,
    }
}

fn judge_response_golden() -> String {
    String::from_utf8(std::fs::read(golden_dir().join("wire/judge_response.json")).unwrap()).unwrap()
}

#[test]
fn request_matches_golden_bytes() {
    let request = JudgeRequest::new(&fixture_image(), PROMPT, 4, 42);
    check_golden("wire/judge_request.json", serde_json::to_string(&request).unwrap().as_bytes());
    check_golden(
        "wire/judge_response.json",
        serde_json::to_string(&fixture_response()).unwrap().as_bytes(),
    );
    check_golden("wire/health_response.json", br#"{"status":"ok","model":"mock"}"#);
}

#[test]
fn b64_is_little_endian_f32() {
    assert_eq!(encode_f32_b64(&[1.0]), "AACAPw==");
    assert_eq!(decode_f32_b64("AACAPwAAAMA=").unwrap(), vec![1.0, -2.0]);
    assert!(decode_f32_b64("AACA").is_err());
}

#[test]
fn health_then_judge_round_trip() {
    let mock = MockJudge::start(vec![health_ok(), Reply::Json(200, judge_response_golden())]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 5_000).unwrap();
    let health = judge.health().unwrap();
    assert_eq!(health.model, "mock");
    let result = judge.judge(&fixture_image(), 42).unwrap();
    assert_eq!(result.score, 0.25);
    assert_eq!(result.grad[0], -6.0 / 64.0);
    assert_eq!(result.grad[11], 5.0 / 64.0);

    let seen = mock.requests();
    assert_eq!((seen[0].method.as_str(), seen[0].path.as_str()), ("GET", "/v1/health"));
    assert_eq!((seen[1].method.as_str(), seen[1].path.as_str()), ("POST", "/v1/judge"));
    let golden = std::fs::read_to_string(golden_dir().join("wire/judge_request.json")).unwrap();
    assert_eq!(seen[1].body, golden);
    assert!(judge.describe().contains("model=mock"));
}

#[test]
fn retries_once_after_timeout() {
    let slow = Reply::Delay(Duration::from_millis(1500), 200, judge_response_golden());
    let mock = MockJudge::start(vec![slow, Reply::Json(200, judge_response_golden())]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 300).unwrap();
    let result = judge.judge(&fixture_image(), 42).unwrap();
    assert_eq!(result.score, 0.25);
    assert_eq!(mock.requests().len(), 2);
}

#[test]
fn two_timeouts_are_unavailable() {
    let slow = Reply::Delay(Duration::from_millis(1500), 200, judge_response_golden());
    let mock = MockJudge::start(vec![slow]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 200).unwrap();
    let err = judge.judge(&fixture_image(), 42).unwrap_err();
    assert!(matches!(err, JudgeError::Unavailable(_)), "{err}");
    assert_eq!(mock.requests().len(), 2);
}

#[test]
fn refused_connection_is_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut judge = RemoteJudge::new(&endpoint, PROMPT, 4, 1_000).unwrap();
    assert!(matches!(judge.health(), Err(JudgeError::Unavailable(_))));
}

#[test]
fn loading_model_is_unavailable() {
    let mock = MockJudge::start(vec![Reply::Json(503, r#"{"error":"loading"}"#.into())]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 1_000).unwrap();
    assert!(matches!(judge.health(), Err(JudgeError::Unavailable(_))));
}

#[test]
fn bad_request_is_protocol_error() {
    let mock = MockJudge::start(vec![Reply::Json(400, r#"{"error":"pixels_b64 length"}"#.into())]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 1_000).unwrap();
    match judge.judge(&fixture_image(), 1).unwrap_err() {
        JudgeError::Protocol { message, .. } => assert!(message.contains("pixels_b64 length"), "{message}"),
        other => panic!("{other}"),
    }
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let wrong_dims = serde_json::to_string(&JudgeResponse {
        grad_width: 3,
        ..fixture_response()
    })
    .unwrap();
    let short = serde_json::to_string(&JudgeResponse {
        grad_b64: encode_f32_b64(&[0.0; 11]),
        ..fixture_response()
    })
    .unwrap();
    let nan = serde_json::to_string(&JudgeResponse {
        grad_b64: encode_f32_b64(&[f64::NAN; 12]),
        ..fixture_response()
    })
    .unwrap();
    for body in ["not json".to_string(), r#"{"score":1}"#.into(), wrong_dims, short, nan] {
        let mock = MockJudge::start(vec![Reply::Json(200, body.clone())]);
        let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 1_000).unwrap();
        match judge.judge(&fixture_image(), 1) {
            Err(JudgeError::Protocol { payload, .. }) => assert_eq!(payload, body),
            other => panic!("{body}: {other:?}"),
        }
    }
}

#[test]
fn unhealthy_status_is_rejected() {
    let mock = MockJudge::start(vec![Reply::Json(200, r#"{"status":"warming","model":"m"}"#.into())]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 1_000).unwrap();
    assert!(matches!(judge.health(), Err(JudgeError::Unavailable(_))));
}

#[test]
fn hangup_is_unavailable() {
    let mock = MockJudge::start(vec![Reply::Hangup]);
    let mut judge = RemoteJudge::new(&mock.endpoint, PROMPT, 4, 1_000).unwrap();
    assert!(matches!(judge.judge(&fixture_image(), 1), Err(JudgeError::Unavailable(_))));
}

#[test]
fn constructor_rejects_bad_settings() {
    assert!(RemoteJudge::new("http://x", PROMPT, 0, 10).is_err());
    assert!(RemoteJudge::new("http://x", "  ", 4, 10).is_err());
}
