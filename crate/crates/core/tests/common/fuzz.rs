//! Seeded fuzzing of every decoder: random bytes, and valid frames with a few
//! bytes flipped. Decoders must return (Ok or Err) without panicking.

use e2loop::codec::{decode_frame, decode_frames, encode_frame, Envelope, FrameDecoder, MsgType};
use e2loop::e2ap::{
    decode_control_failure, decode_control_request, decode_setup_request, decode_setup_response,
    decode_subscription_failure, decode_subscription_response, Indication, SubscriptionRecord,
};
use e2loop::kpm::{decode_kpm_action, decode_kpm_report, parse_kpm_function_definition, Vocabulary};
use e2loop::rc::{decode_rc_control, parse_rc_function_definition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_bytes(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = match rng.gen_range(0..4) {
        0 => rng.gen_range(0..16),
        1 => rng.gen_range(0..64),
        _ => rng.gen_range(0..512),
    };
    (0..len).map(|_| rng.gen()).collect()
}

fn flipped(mut bytes: Vec<u8>, rng: &mut ChaCha8Rng) -> Vec<u8> {
    if bytes.is_empty() {
        return bytes;
    }
    for _ in 0..rng.gen_range(1..4) {
        let i = rng.gen_range(0..bytes.len());
        bytes[i] = rng.gen();
    }
    if rng.gen_bool(0.2) {
        let cut = rng.gen_range(0..bytes.len());
        bytes.truncate(cut);
    }
    bytes
}

/// Feeds `n` inputs to every decoder; returns how many were rejected by the
/// frame decoder (just so the work is observable).
pub fn fuzz_decoders(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::standard();
    let mut rejected = 0;
    for i in 0..n {
        let body = random_bytes(&mut rng);
        let t = MsgType::ALL[rng.gen_range(0..MsgType::ALL.len())];
        let env = Envelope::new(t, rng.gen(), rng.gen(), body.clone());
        let frame = if i % 2 == 0 {
            random_bytes(&mut rng)
        } else {
            flipped(encode_frame(&env).expect("small body"), &mut rng)
        };
        if decode_frame(&frame).is_err() {
            rejected += 1;
        }
        let _ = decode_frames(&frame);
        let mut dec = FrameDecoder::new();
        dec.push(&frame);
        while let Ok(Some(_)) = dec.next_frame() {}

        let _ = decode_setup_request(&env);
        let _ = decode_setup_response(&env);
        let _ = SubscriptionRecord::from_envelope(&env);
        let _ = decode_subscription_response(&env);
        let _ = decode_subscription_failure(&env);
        let _ = Indication::from_envelope(&env);
        let _ = decode_control_request(&env);
        let _ = decode_control_failure(&env);

        let (a, b) = body.split_at(rng.gen_range(0..=body.len()));
        let _ = decode_kpm_action(&body);
        let _ = decode_kpm_report(a, b);
        let _ = parse_kpm_function_definition(&body, &vocab);
        let _ = decode_rc_control(a, b);
        let _ = parse_rc_function_definition(&body);
    }
    rejected
}
