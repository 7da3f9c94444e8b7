use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;
use privmatch::cipher::{hash_to_group, CipherContext, GroupElement, SafePrime};
use privmatch::protocol::pmatch::{PMatchInitiator, PMatchResponder, Variant};
use privmatch::protocol::{run_session, Frame, MatchOutcome, Phase, ProtocolMessage, Session, TranscriptEntry};
use privmatch::similarity::{common_attributes, priority_ochiai, tanimoto, AttributeProfile};

const POOL: [&str; 4] = ["art", "books", "chess", "dance"];

fn prime() -> Arc<SafePrime> {
    static PRIME: OnceLock<Arc<SafePrime>> = OnceLock::new();
    PRIME
        .get_or_init(|| Arc::new(SafePrime::generate(64, b"sessions").unwrap()))
        .clone()
}

fn run(
    variant: Variant,
    a: &AttributeProfile,
    b: &AttributeProfile,
    t: f64,
    seed: &[u8],
) -> (MatchOutcome, MatchOutcome, Vec<TranscriptEntry>, PMatchInitiator, PMatchResponder) {
    let p = prime();
    let mut i = PMatchInitiator::new(variant, a, CipherContext::derive(p.clone(), b"alice"), seed).unwrap();
    let mut r = PMatchResponder::new(variant, b, CipherContext::derive(p, b"bob"), t, seed).unwrap();
    let transcript = run_session(&mut i, &mut r).unwrap();
    (i.outcome().unwrap().clone(), r.outcome().unwrap().clone(), transcript, i, r)
}

/// Every non-empty profile over `POOL` with priorities in `1..=2`.
fn all_profiles() -> Vec<AttributeProfile> {
    let mut out = Vec::new();
    for code in 1..3usize.pow(POOL.len() as u32) {
        let mut c = code;
        let mut entries = Vec::new();
        for attr in POOL {
            if c % 3 > 0 {
                entries.push((attr, (c % 3) as u32));
            }
            c /= 3;
        }
        out.push(AttributeProfile::new(entries, 2).unwrap());
    }
    out
}

#[test]
fn delivered_values_match_plaintext_on_every_small_pair() {
    let profiles = all_profiles();
    assert_eq!(profiles.len(), 80);
    for a in &profiles {
        for b in &profiles {
            let common = common_attributes(a, b);
            let (io, ro, ..) = run(Variant::Basic, a, b, 0.0, b"sweep");
            let (po, pr, ..) = run(Variant::Plus, a, b, 0.0, b"sweep");
            assert_eq!(po.common_count, Some(common.len()));
            assert_eq!(pr.common_count, Some(common.len()));
            if common.is_empty() {
                assert!(!io.accepted && io.similarity.is_none());
                assert!(!po.accepted && po.similarity.is_none());
                continue;
            }
            let t = tanimoto(&common.initiator, &common.responder).unwrap();
            assert!((io.similarity.unwrap() - t).abs() < 1e-9);
            assert_eq!(ro.disclosed.as_ref(), Some(&common));
            assert!((po.similarity.unwrap() - priority_ochiai(a, b)).abs() < 1e-9);
        }
    }
}

fn alice() -> AttributeProfile {
    AttributeProfile::new([("cancer", 8), ("music", 4), ("football", 1), ("tennis", 3), ("cooking", 2)], 10).unwrap()
}

fn david() -> AttributeProfile {
    AttributeProfile::new([("cancer", 9), ("music", 8), ("tennis", 6)], 10).unwrap()
}

#[test]
fn initiator_learns_only_its_privacy_level() {
    let (basic, ..) = run(Variant::Basic, &alice(), &david(), 0.0, b"t");
    assert_eq!(basic.common_count, None);
    assert_eq!(basic.disclosed, None);
    let (plus, ..) = run(Variant::Plus, &alice(), &david(), 0.0, b"t");
    assert_eq!(plus.common_count, Some(3));
    assert_eq!(plus.disclosed, None);
}

#[test]
fn wire_carries_no_plaintext() {
    let p = prime();
    let (_, _, transcript, ..) = run(Variant::Basic, &alice(), &david(), 0.0, b"t");
    let hashes: Vec<_> = alice().attributes().map(|a| hash_to_group(a.as_bytes(), &p)).collect();
    for entry in &transcript {
        let bytes = Frame::new(privmatch::ProtocolId::PMatch, entry.message.clone()).encode();
        for attr in alice().attributes() {
            assert!(!bytes.windows(attr.len()).any(|w| w == attr.as_bytes()));
        }
        // priority 1 is the fixed point of x ↦ x^k and is the only one visible
        let small = |c: &GroupElement| *c.value() <= BigUint::from(10u32);
        let ones = alice().iter().filter(|&(_, a)| a == 1).count();
        if let ProtocolMessage::Pm1 { pairs } = &entry.message {
            assert!(pairs.iter().all(|(masked, _)| !hashes.contains(masked)));
            assert_eq!(pairs.iter().filter(|(_, prio)| small(prio)).count(), ones);
            assert!(pairs.iter().all(|(_, prio)| !small(prio) || prio.value() == &BigUint::from(1u32)));
        }
        if let ProtocolMessage::Pm5 { priorities } = &entry.message {
            assert_eq!(priorities.iter().filter(|c| small(c)).count(), ones);
        }
    }
}

#[test]
fn transcripts_are_deterministic_and_frame_exactly() {
    let (.., t1, _, _) = run(Variant::Plus, &alice(), &david(), 0.0, b"seed-1");
    let (.., t2, _, _) = run(Variant::Plus, &alice(), &david(), 0.0, b"seed-1");
    let (.., t3, _, _) = run(Variant::Plus, &alice(), &david(), 0.0, b"seed-2");
    assert_eq!(t1, t2);
    assert_ne!(t1, t3);
    for entry in &t1 {
        let frame = Frame::new(privmatch::ProtocolId::PMatchPlus, entry.message.clone());
        assert_eq!(Frame::decode_exact(&frame.encode()).unwrap(), frame);
    }
}

#[test]
fn counts_follow_closed_forms() {
    for m in 1..=5usize {
        let names: Vec<String> = (0..m).map(|i| format!("attr-{i}")).collect();
        let a = AttributeProfile::new(names.iter().map(|n| (n.as_str(), 3)), 10).unwrap();
        let (.., i, r) = run(Variant::Basic, &a, &a, 0.0, b"t");
        let m = m as u64;
        let (ic, rc) = (i.counters(), r.counters());
        assert_eq!((ic.offline.hash_ops, ic.offline.exp_class()), (m, 2 * m + 1));
        assert_eq!((rc.offline.hash_ops, rc.offline.exp_class()), (m, 2 * m + 1));
        assert_eq!(ic.online.exp_class(), 2 * m);
        assert_eq!(rc.online.exp_class(), 3 * m);
        assert_eq!((ic.elements_sent, rc.elements_sent), (4 * m, 2 * m));
        assert_eq!(ic.elements_received, rc.elements_sent);
        assert_eq!(i.counters().exp1024_ops(Phase::Online), 2 * m);
    }
}

#[test]
fn threshold_tie_accepts() {
    let a = AttributeProfile::new([("x", 2), ("y", 2)], 10).unwrap();
    let (io, ..) = run(Variant::Basic, &a, &a, 1.0, b"t");
    assert!(io.accepted);
    assert_eq!(io.similarity, Some(1.0));
}
