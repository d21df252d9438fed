//! Seed-42 golden values of the spiking encoder on a single 8×8 image.

use tde_snn::diversity::{coverage, train_histogram};
use tde_snn::encoder::{direct_spikes, se_encode, EncoderConfig, EncoderState};
use tde_snn::neuron::LifParams;
use tde_snn::rng::stream;
use tde_snn::synthetic;

#[test]
fn unit_alpha_is_direct_encoding() {
    let image = synthetic::batch(1, 8, 8, 42).unwrap().remove(0).image;
    let mut enc = EncoderState::seeded(1, 4, &EncoderConfig::default(), &mut stream(42, "model")).unwrap();
    enc.calibrate(std::slice::from_ref(&image)).unwrap();
    enc.set_alpha(1.0);
    let p = LifParams::default();
    assert_eq!(se_encode(&image, &enc, &p).unwrap(), direct_spikes(&image, &enc, &p).unwrap());
}

#[test]
fn encoder_coverage_exceeds_direct_encoding() {
    let image = synthetic::batch(1, 8, 8, 42).unwrap().remove(0).image;
    let mut enc = EncoderState::seeded(1, 4, &EncoderConfig::default(), &mut stream(42, "model")).unwrap();
    enc.calibrate(std::slice::from_ref(&image)).unwrap();
    let p = LifParams::default();
    let se = train_histogram(&se_encode(&image, &enc, &p).unwrap()).unwrap();
    let direct = train_histogram(&direct_spikes(&image, &enc, &p).unwrap()).unwrap();
    assert_eq!(se.counts, [470, 2, 7, 2, 3, 3, 0, 8, 0, 0, 0, 1, 1, 2, 2, 11]);
    assert_eq!(direct.counts, [409, 15, 27, 0, 0, 13, 2, 1, 0, 0, 0, 0, 0, 0, 0, 45]);
    assert_eq!((coverage(&se), coverage(&direct)), (12, 7));
}
