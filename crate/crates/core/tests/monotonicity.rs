mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpmix::obs::GlobalState;
use qpmix::qpmix::Mixer;

#[test]
fn random_mixers_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 4, 5, 8] {
        let m = Mixer::new(n, GlobalState::width(n), 16, &mut rng).unwrap();
        let min = common::min_mixer_partial(&m, 100, &mut rng);
        assert!(min >= -1e-9, "n = {n}: ∂Q_tot/∂q = {min}");
    }
}

#[test]
fn trained_mixer_is_monotone() {
    let m = common::trained_mixer(20_000, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let min = common::min_mixer_partial(&m, 100, &mut rng);
    assert!(min >= -1e-9, "∂Q_tot/∂q = {min}");
}
