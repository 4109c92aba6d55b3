//! Central-difference checks of the hand-written backprop, run on perturbed
//! parameters so every weight sees nonzero signal.

use selfgan::core::{Condition, RandomSource, Sequence, Vocabulary};
use selfgan::models::{
    discriminator_bce_loss, discriminator_bce_loss_and_grad, generator_nll_loss,
    generator_nll_loss_and_grad, DiscriminatorModel, GeneratorModel, ModelArch,
};

fn tiny_arch(vocab: &Vocabulary) -> ModelArch {
    let mut arch = ModelArch::for_vocab(vocab);
    arch.embed_dim = 4;
    arch.hidden_dim = 6;
    arch.cond_slots = 4;
    arch.prefix_slots = 3;
    arch.max_positions = 8;
    arch
}

fn fixture(vocab: &Vocabulary) -> (Vec<Condition>, Vec<Sequence>, Vec<Sequence>) {
    let conds = vec![
        Condition::new(vec![3, 4], vocab).unwrap(),
        Condition::new(vec![5], vocab).unwrap(),
    ];
    let first = vec![
        Sequence::new(vec![4, 3, 1], vocab, 32).unwrap(),
        Sequence::new(vec![5, 1], vocab, 32).unwrap(),
    ];
    let second = vec![
        Sequence::new(vec![6, 6, 1], vocab, 32).unwrap(),
        Sequence::new(vec![3, 1], vocab, 32).unwrap(),
    ];
    (conds, first, second)
}

/// Largest relative error between `analytic` and a central difference of
/// `loss`, probed on a stride of parameter indices.
fn worst_relative_error(
    values: &mut [f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
) -> (f64, usize) {
    let mut worst = (0.0f64, 0usize);
    for i in (0..values.len()).step_by(7) {
        let orig = values[i];
        let h = 1e-4 * orig.abs().max(1.0);
        values[i] = orig + h;
        let plus = loss(values);
        values[i] = orig - h;
        let minus = loss(values);
        values[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    worst
}

#[test]
fn discriminator_gradient_matches_finite_difference() {
    let vocab = Vocabulary::ascii_alphabet(4).unwrap();
    let arch = tiny_arch(&vocab);
    let mut rng = RandomSource::new(3);
    let mut disc = DiscriminatorModel::new(arch, &mut rng).unwrap();
    for v in disc.params_mut().values_mut().iter_mut() {
        *v += rng.uniform(-0.2, 0.2);
    }
    let (conds, human_seqs, machine_seqs) = fixture(&vocab);
    let human: Vec<_> = conds.iter().zip(&human_seqs).collect();
    let machine: Vec<_> = conds.iter().zip(&machine_seqs).collect();
    discriminator_bce_loss_and_grad(&mut disc, &human, &machine).unwrap();
    let analytic = disc.gradient_snapshot().unwrap();
    let template = disc.clone();
    let (worst, at) = {
        let mut probe = disc.clone();
        worst_relative_error(probe.params_mut().values_mut(), &analytic, |vals| {
            let mut model = template.clone();
            model.params_mut().values_mut().copy_from_slice(vals);
            discriminator_bce_loss(&model, &human, &machine).unwrap()
        })
    };
    assert!(worst < 1e-6, "gradient mismatch {worst:.3e} at parameter {at}");
}

#[test]
fn generator_gradient_matches_finite_difference() {
    let vocab = Vocabulary::ascii_alphabet(4).unwrap();
    let arch = tiny_arch(&vocab);
    let mut rng = RandomSource::new(4);
    let mut gen = GeneratorModel::new(arch, &mut rng).unwrap();
    for v in gen.params_mut().values_mut().iter_mut() {
        *v += rng.uniform(-0.2, 0.2);
    }
    let (conds, seqs, _) = fixture(&vocab);
    let batch: Vec<_> = conds.iter().zip(&seqs).collect();
    generator_nll_loss_and_grad(&mut gen, &batch).unwrap();
    let analytic = gen.gradient_snapshot().unwrap();
    let template = gen.clone();
    let (worst, at) = {
        let mut probe = gen.clone();
        worst_relative_error(probe.params_mut().values_mut(), &analytic, |vals| {
            let mut model = template.clone();
            model.params_mut().values_mut().copy_from_slice(vals);
            generator_nll_loss(&model, &batch).unwrap()
        })
    };
    assert!(worst < 1e-6, "gradient mismatch {worst:.3e} at parameter {at}");
}
