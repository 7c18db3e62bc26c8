//! Autograd gradients against central finite differences.

mod common;

use candle_core::{DType, Device, Tensor, Var};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchclip::backbone::toy::toy_backbone;
use sketchclip::codebook::{
    codebook_loss, coefficients_tensor, mixup_feature, mixup_loss, sample_mix_coefficients, AbstractionCodebook,
    ClassifierKind,
};
use sketchclip::decoder::{sketch2vec_loss, PaddedTargets, Sketch2VecDecoder};
use sketchclip::nn::Init;
use sketchclip::sketch::{Abstraction, LabeledSample};
use sketchclip::train::{cross_entropy_logits, total_loss, Model};

const REL_TOL: f64 = 1e-4;

fn fixture() -> (Model, Vec<LabeledSample>, Vec<String>) {
    let model = Model::new(toy_backbone(0).unwrap(), toy_config()).unwrap();
    let cats = names(&["circle", "cross"]);
    let samples = toy_corpus(&["circle", "cross"], 1, 5);
    (model, samples, cats)
}

fn classification_loss(model: &Model, samples: &[LabeledSample], cats: &[String]) -> Tensor {
    let refs: Vec<_> = samples.iter().collect();
    let tokens = model.tokenize(cats).unwrap();
    let (logits, _) = model.classify(&model.image_batch(&refs).unwrap(), &tokens).unwrap();
    let labels: Vec<_> = samples.iter().map(|s| s.category_index).collect();
    cross_entropy_logits(&logits, &labels).unwrap()
}

fn assert_gradient(name: &str, var: &Var, count: usize, loss: &dyn Fn() -> Tensor) {
    let worst = check_gradient(var, count, loss);
    assert!(worst < REL_TOL, "{name}: worst relative error {worst:e}");
}

#[test]
pub fn meta_net_gradients() {
    let (model, samples, cats) = fixture();
    for (name, var) in model.prompts.meta_vars() {
        assert_gradient(&name, &var, 6, &|| classification_loss(&model, &samples, &cats));
    }
}

#[test]
pub fn meta_net_input_gradient() {
    let (model, _, _) = fixture();
    let f = Var::from_tensor(&Tensor::new(&[[0.3, -0.2, 0.5, 0.1, -0.7, 0.4, 0.2, -0.1f64]], &Device::Cpu).unwrap())
        .unwrap();
    let shape = model.prompts.shape;
    let n = shape.prompt_len * shape.text_width;
    let probe: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let probe = Tensor::from_vec(probe, (1, shape.prompt_len, shape.text_width), &Device::Cpu).unwrap();
    assert_gradient("f_s", &f, 8, &|| {
        (model.prompts.meta_context(f.as_tensor()).unwrap() * &probe).unwrap().sum_all().unwrap()
    });
}

#[test]
pub fn prompt_and_codebook_code_gradients() {
    let (model, samples, cats) = fixture();
    for (name, var) in model.prompts.prompt_vars() {
        assert_gradient(&name, &var, 8, &|| classification_loss(&model, &samples, &cats));
    }
    let codes = &model.codebook.as_ref().unwrap().codes;
    assert_gradient("codebook.codes", codes, 8, &|| classification_loss(&model, &samples, &cats));
}

#[test]
pub fn total_loss_gradients_through_every_term() {
    let (model, samples, cats) = fixture();
    let refs: Vec<_> = samples.iter().collect();
    let labels: Vec<_> = samples.iter().map(|s| s.category_index).collect();
    let tokens = model.tokenize(&cats).unwrap();
    let loss = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        total_loss(&model, &refs, &labels, &tokens, &mut rng).unwrap().0
    };
    for (name, var) in model.trainable_vars() {
        assert_gradient(&name, &var, 3, &loss);
    }
}

fn small_codebook(kind: ClassifierKind) -> AbstractionCodebook {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut init = Init {
        rng: &mut rng,
        device: &Device::Cpu,
        dtype: DType::F64,
    };
    AbstractionCodebook::init(&mut init, 4, 2, 3, kind).unwrap()
}

#[test]
pub fn codebook_classifier_gradients() {
    let features = Tensor::new(
        &[[0.5, -1.0, 0.2, 0.9], [-0.3, 0.4, 1.1, -0.6], [0.8, 0.1, -0.5, 0.3f64]],
        &Device::Cpu,
    )
    .unwrap();
    let labels = [Abstraction::Low, Abstraction::High, Abstraction::Medium];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coeffs: Vec<_> = (0..3).map(|_| sample_mix_coefficients(1.0, &mut rng).unwrap()).collect();
    let lambda = coefficients_tensor(&coeffs, &Device::Cpu, DType::F64).unwrap();
    for kind in [ClassifierKind::Linear, ClassifierKind::TwoLayer] {
        let cb = small_codebook(kind);
        for (name, var) in cb.vars().into_iter().skip(1) {
            assert_gradient(&format!("{kind:?} L_CB {name}"), &var, 6, &|| {
                codebook_loss(&cb.predict(&features).unwrap(), &labels).unwrap()
            });
            assert_gradient(&format!("{kind:?} L_mix {name}"), &var, 6, &|| {
                let f = |i: usize| features.narrow(0, i, 1).unwrap();
                let rows: Vec<_> = (0..3)
                    .map(|r| {
                        mixup_feature(&f(r), &f((r + 1) % 3), &f((r + 2) % 3), &lambda.narrow(0, r, 1).unwrap())
                            .unwrap()
                    })
                    .collect();
                let mixed = Tensor::cat(&rows, 0).unwrap();
                mixup_loss(&cb.predict(&mixed).unwrap(), &lambda).unwrap()
            });
        }
    }
}

#[test]
pub fn decoder_gradients_on_two_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut init = Init {
        rng: &mut rng,
        device: &Device::Cpu,
        dtype: DType::F64,
    };
    let dec = Sketch2VecDecoder::init(&mut init, 8, 6).unwrap();
    let features = init.normal(&[2, 8], 1.0).unwrap();
    let samples = toy_corpus(&["star"], 1, 6);
    let vectors: Vec<_> = samples.iter().skip(1).map(|s| s.vector.as_ref()).collect();
    let targets = PaddedTargets::new(&vectors, 2, &Device::Cpu, DType::F64).unwrap();
    for (name, var) in dec.vars() {
        assert_gradient(&name, &var, 8, &|| {
            let pred = dec.decode(&features, 2, Some(&targets.points)).unwrap();
            sketch2vec_loss(&pred, &targets).unwrap()
        });
    }
}

#[test]
pub fn frozen_weights_receive_no_gradient_and_prompts_do() {
    let (mut model, samples, cats) = fixture();
    model.config.layer_norm = false;
    let grads = classification_loss(&model, &samples, &cats).backward().unwrap();
    for (name, t) in model.backbone.frozen_tensors() {
        assert!(grads.get(t).is_none(), "{name} received a gradient");
    }
    for (name, var) in model.prompts.prompt_vars() {
        let g = vals(grads.get(var.as_tensor()).unwrap());
        assert!(g.iter().any(|v| v.abs() > 0.0), "{name} has an all-zero gradient");
    }
}
