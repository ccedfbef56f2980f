mod common;

use std::sync::Arc;

use common::*;
use faircert::augment::AugmentorConfig;
use faircert::crypto::{issue_certificate, merkle_root, Certificate};
use faircert::fsc::{Party, TrustedDealer};
use faircert::protocol::{
    certify_in_process, certify_tcp, infer_in_process, infer_tcp, CertFailure, CertificationRun, Client, FrameType,
    InferenceFailure, InferenceRun, Regulator, RejectReason, Server, ServerDeviation, ServerEvent,
};
use faircert::{FairnessMetric, FairnessSpec, Fixed, Micro};

#[derive(Clone, Copy, Debug)]
enum Net {
    InProcess,
    Tcp,
}

const NETS: [Net; 2] = [Net::InProcess, Net::Tcp];

fn certify(net: Net, reg: &Regulator, server: &mut Server) -> CertificationRun {
    match net {
        Net::InProcess => certify_in_process(reg, server, Arc::new(TrustedDealer)),
        Net::Tcp => certify_tcp(reg, server, Arc::new(TrustedDealer)).unwrap(),
    }
}

fn infer(net: Net, client: &Client, server: &mut Server) -> InferenceRun {
    match net {
        Net::InProcess => infer_in_process(client, server, Arc::new(TrustedDealer)),
        Net::Tcp => infer_tcp(client, server, Arc::new(TrustedDealer)).unwrap(),
    }
}

fn certified(net: Net, world: &World) -> (Server, Certificate) {
    let mut server = world.server();
    let run = certify(net, &world.regulator(), &mut server);
    let cert = run.outcome.expect("fair model certifies");
    assert_eq!(run.server, Ok(ServerEvent::Certified(cert.clone())));
    (server, cert)
}

#[test]
fn honest_run_accepts_with_local_prediction() {
    for net in NETS {
        let w = World::new(1);
        let (mut server, cert) = certified(net, &w);
        assert_eq!(cert.digest, merkle_root(&w.model.to_bytes()).unwrap());
        let client = w.client(spec("0.1"));
        let run = infer(net, &client, &mut server);
        let accepted = run.outcome.unwrap_or_else(|e| panic!("{net:?}: {e}"));
        let x = client.input();
        assert_eq!(accepted.prediction, w.model.predict_features(&x.features, x.group).unwrap());
        assert_eq!(accepted.digest, cert.digest);
        assert_eq!(run.server, Ok(ServerEvent::Served));
    }
}

#[test]
fn tampered_weight_rejects_sig_invalid() {
    for net in NETS {
        let w = World::new(2);
        let (server, _) = certified(net, &w);
        let mut server = server.with_deviation(ServerDeviation {
            inference_model: Some(tampered(&w.model)),
            ..Default::default()
        });
        let run = infer(net, &w.client(spec("0.1")), &mut server);
        assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::SigInvalid)), "{net:?}");
    }
}

#[test]
fn wrong_key_certificate_rejects() {
    for net in NETS {
        let w = World::new(3);
        let (server, cert) = certified(net, &w);
        let forged = issue_certificate(&keys(99), cert.digest, cert.spec.clone());
        let mut server = server.with_deviation(ServerDeviation {
            certificate_bytes: Some(forged.to_bytes()),
            ..Default::default()
        });
        let run = infer(net, &w.client(spec("0.1")), &mut server);
        assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::SigInvalid)), "{net:?}");
    }
}

#[test]
fn spec_mismatch_rejects() {
    for net in NETS {
        let w = World::new(4);
        let (mut server, _) = certified(net, &w);
        let run = infer(net, &w.client(spec("0.05")), &mut server);
        assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::SpecMismatch)), "{net:?}");
    }
}

#[test]
fn undersampled_test_set_fails_precheck_without_server_contact() {
    for net in NETS {
        let w = World::new(5);
        let small = w.config.sample_stratified(&[PER_GROUP, 10]).unwrap();
        let reg = Regulator::new(keys(7), small, spec("0.1"));
        let mut server = w.server();
        let run = certify(net, &reg, &mut server);
        assert!(matches!(run.outcome, Err(CertFailure::PrecheckFailed { required: 1016, .. })), "{:?}", run.outcome);
        assert!(run.transcripts.regulator.is_empty());
        assert!(run.transcripts.server.is_empty());
        assert!(run.transcripts.dealer.is_empty());
        assert!(server.certificate().is_none());
    }
}

#[test]
fn unfair_model_is_not_certified() {
    let w = World::new(6);
    let unfair = faircert::model::planted::PlantedConfig::balanced(2, 2, 4, vec![0.05, 0.3], 6);
    let mut server = Server::new(unfair.planted_model().unwrap());
    let run = certify(Net::InProcess, &w.regulator(), &mut server);
    assert!(matches!(run.outcome, Err(CertFailure::NotFair { .. })));
    assert_eq!(run.server, Ok(ServerEvent::NotCertified));
    assert!(server.certificate().is_none());
    let run = infer(Net::InProcess, &w.client(spec("0.1")), &mut server);
    assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::NoCertificate)));
}

#[test]
fn certificate_for_another_model_rejects() {
    let w = World::new(7);
    let (_, cert) = certified(Net::InProcess, &w);
    let other = World::new(8);
    let mut server = Server::new(other.model.clone()).with_certificate(cert);
    assert_ne!(merkle_root(&other.model.to_bytes()).unwrap(), merkle_root(&w.model.to_bytes()).unwrap());
    let run = infer(Net::InProcess, &w.client(spec("0.1")), &mut server);
    assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::SigInvalid)));
}

#[test]
fn replayed_signature_with_edited_spec_rejects() {
    let w = World::new(9);
    let (server, cert) = certified(Net::InProcess, &w);
    let edits = [
        spec("0.05"),
        FairnessSpec::private(FairnessMetric::Eo, micro("0.1"), micro("0.05")).unwrap(),
        FairnessSpec::private(FairnessMetric::Ore, micro("0.1"), micro("0.01")).unwrap(),
    ];
    for edited in edits {
        let mut replay = cert.clone();
        replay.spec = edited.clone();
        let mut server = server.clone().with_deviation(ServerDeviation {
            certificate_bytes: Some(replay.to_bytes()),
            ..Default::default()
        });
        // the client asks for exactly the edited parameters
        let run = infer(Net::InProcess, &w.client(edited), &mut server);
        assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::SigInvalid)));
    }
}

#[test]
fn garbage_certificate_rejects() {
    let w = World::new(10);
    let (server, _) = certified(Net::InProcess, &w);
    let mut server = server.with_deviation(ServerDeviation {
        certificate_bytes: Some(b"FCRT1 nonsense".to_vec()),
        ..Default::default()
    });
    let run = infer(Net::InProcess, &w.client(spec("0.1")), &mut server);
    assert_eq!(run.outcome, Err(InferenceFailure::Reject(RejectReason::SigInvalid)));
}

#[test]
fn transcripts_are_byte_identical_across_runs() {
    for net in NETS {
        let w = World::new(11);
        let a = certify(net, &w.regulator(), &mut w.server());
        let b = certify(net, &w.regulator(), &mut w.server());
        assert!(a.outcome.is_ok());
        assert_eq!(a.transcripts.to_text(), b.transcripts.to_text(), "{net:?}");
        assert_eq!(a.session.unwrap().audit_text(), b.session.unwrap().audit_text());

        let (mut server, _) = certified(net, &w);
        let c = w.client(spec("0.1"));
        let x = infer(net, &c, &mut server.clone());
        let y = infer(net, &c, &mut server);
        assert_eq!(x.transcripts.to_text(), y.transcripts.to_text());
    }
}

#[test]
fn server_never_receives_the_client_input() {
    for net in NETS {
        let w = World::new(12);
        let (mut server, _) = certified(net, &w);
        let client = w.client(spec("0.1"));
        let run = infer(net, &client, &mut server);
        assert!(run.outcome.is_ok());
        let x = client.input();
        let feature_bytes: Vec<u8> = x.features.iter().flat_map(|f| f.to_le_bytes()).collect();
        let received = run.transcripts.server.received();
        assert!(!received.is_empty());
        for f in &received {
            assert_ne!(f.kind, FrameType::FscInput);
            assert!(!f.payload.windows(feature_bytes.len()).any(|win| win == feature_bytes.as_slice()));
        }
        // the only place x travels is the client's own F_SC input
        let sent = run.transcripts.client.sent();
        assert!(sent.iter().any(|f| f.kind == FrameType::FscInput && f.payload[1..] == x.encode()[..]));
    }
}

#[test]
fn leakage_logs_match_the_ideal_functionality() {
    let w = World::new(13);
    let mut server = w.server();
    let run = certify(Net::InProcess, &w.regulator(), &mut server);
    let session = run.session.unwrap();
    assert!(session.leakage_for(Party::P1).is_empty());
    let p2: Vec<_> = session.leakage_for(Party::P2).iter().map(|e| (e.datum, e.len)).collect();
    assert_eq!(p2, vec![("b", 1), ("h", 32)]);
    let dealer_to_server: Vec<_> = run.transcripts.server.received().into_iter().filter(|f| f.kind == FrameType::FscResult).collect();
    assert_eq!(dealer_to_server.len(), 1);
    assert!(dealer_to_server[0].payload.is_empty());

    let run = infer(Net::InProcess, &w.client(spec("0.1")), &mut server);
    let session = run.session.unwrap();
    assert!(session.leakage_for(Party::P1).is_empty());
    let p2: Vec<_> = session.leakage_for(Party::P2).iter().map(|e| (e.datum, e.len)).collect();
    assert_eq!(p2, vec![("y_hat", 2), ("h_tilde", 32)]);
}

#[test]
fn augmented_mode_commits_before_the_seed_is_revealed() {
    for net in NETS {
        let w = World::new(14);
        let spec = FairnessSpec::augmented(FairnessMetric::Ore, micro("0.1"), micro("0.05"), micro("0.1")).unwrap();
        let aug = AugmentorConfig::new(4242, Fixed::from_f64(0.2), micro("0.1"), Micro::ONE, micro("0.5")).unwrap();
        let reg = Regulator::new(keys(7), w.dataset.clone(), spec.clone()).with_augmentor(aug);
        let mut server = w.server();
        let run = certify(net, &reg, &mut server);
        let cert = run.outcome.unwrap_or_else(|e| panic!("{net:?}: {e}"));
        assert_eq!(cert.spec, spec);

        let entries = run.transcripts.server.entries();
        let kinds: Vec<FrameType> = entries
            .iter()
            .map(|(_, b)| faircert::protocol::Frame::decode(b).unwrap().kind)
            .collect();
        let commit = kinds.iter().position(|k| *k == FrameType::InputCommit).unwrap();
        let reveal = kinds.iter().position(|k| *k == FrameType::SeedReveal).unwrap();
        let input = kinds.iter().position(|k| *k == FrameType::FscInput).unwrap();
        assert!(commit < reveal && reveal < input, "{kinds:?}");
        // the public request carries no seed
        let request = run.transcripts.server.received().into_iter().find(|f| f.kind == FrameType::CertRequest).unwrap();
        assert!(!request.payload.windows(8).any(|win| win == 4242u64.to_le_bytes()));

        let client = Client::new(keys(7).verification_key(), spec.clone(), w.client(spec.clone()).input().clone());
        assert!(infer(net, &client, &mut server).outcome.is_ok());
    }
}

#[test]
fn completeness_over_many_seeds() {
    for seed in 0..100 {
        let w = World::new(1000 + seed);
        let (mut server, _) = certified(Net::InProcess, &w);
        let client = w.client(spec("0.1"));
        let accepted = infer(Net::InProcess, &client, &mut server).outcome.unwrap();
        let x = client.input();
        assert_eq!(accepted.prediction, w.model.predict_features(&x.features, x.group).unwrap());
    }
}
