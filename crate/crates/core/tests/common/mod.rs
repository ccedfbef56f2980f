#![allow(dead_code)]

use faircert::crypto::KeyPair;
use faircert::fsc::InferenceInput;
use faircert::model::planted::PlantedConfig;
use faircert::model::{BiasedWrapper, LinearModel};
use faircert::protocol::{setup, Client, Regulator, Server};
use faircert::{Dataset, FairnessMetric, FairnessSpec, Fixed, Micro, ModelSpec};

pub const PER_GROUP: usize = 1200;

pub fn spec(eps: &str) -> FairnessSpec {
    FairnessSpec::private(FairnessMetric::Ore, eps.parse().unwrap(), "0.05".parse().unwrap()).unwrap()
}

pub fn keys(seed: u8) -> KeyPair {
    setup(&[seed; 32])
}

/// Flip-free plant: every group's error rate is zero, so the test gap is 0.
pub fn fair_config(seed: u64) -> PlantedConfig {
    PlantedConfig::balanced(2, 2, 4, vec![0.0, 0.0], seed)
}

pub struct World {
    pub config: PlantedConfig,
    pub model: ModelSpec,
    pub dataset: Dataset,
    pub keys_seed: u8,
}

impl World {
    pub fn new(seed: u64) -> Self {
        let config = fair_config(seed);
        World {
            model: config.planted_model().unwrap(),
            dataset: config.sample_stratified(&[PER_GROUP, PER_GROUP]).unwrap(),
            config,
            keys_seed: 7,
        }
    }

    pub fn regulator(&self) -> Regulator {
        Regulator::new(keys(self.keys_seed), self.dataset.clone(), spec("0.1"))
    }

    pub fn server(&self) -> Server {
        Server::new(self.model.clone())
    }

    pub fn client(&self, spec: FairnessSpec) -> Client {
        let data = self.config.with_seed(999).sample(1).unwrap();
        let s = &data.samples()[0];
        Client::new(
            keys(self.keys_seed).verification_key(),
            spec,
            InferenceInput {
                group: s.group,
                features: s.features.clone(),
            },
        )
    }
}

/// The same planted model with one bit of one inner weight flipped.
pub fn tampered(model: &ModelSpec) -> ModelSpec {
    let ModelSpec::BiasedWrapper(w) = model else { panic!("planted model is a wrapper") };
    let ModelSpec::ThresholdLinear(inner) = w.inner() else { panic!("linear inner model") };
    let mut inner: LinearModel = inner.clone();
    let p = &mut inner.parameters_mut()[0];
    *p = Fixed::from_bits(p.to_bits() ^ 1);
    BiasedWrapper::new(inner.into(), w.flip_rates().to_vec(), w.seed()).unwrap().into()
}

pub fn micro(s: &str) -> Micro {
    s.parse().unwrap()
}
