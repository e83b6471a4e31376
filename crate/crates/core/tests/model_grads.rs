//! Gradient checks through the layers and every model variant.

use hob2srnn::diffcore::{finite_diff_check, Tape, Tensor};
use hob2srnn::layers::{Activation, DenseLayer, FcGruCell};
use hob2srnn::model::{total_loss, Hob2sRnn, ModelDims, ModelVariant, SeriesBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn series(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn fcgru_sequence_gradients() {
    for enrich in [None, Some((3, 4))] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cell = FcGruCell::new(2, enrich, 5, &mut rng);
        let head = DenseLayer::new(5, 3, Activation::Identity, &mut rng);
        let xs = series(&mut rng, 4, 2);
        let mut params = cell.params();
        params.extend(head.params());
        let r = finite_diff_check(
            |t: &mut Tape| {
                let hs = cell.run_sequence(t, &xs)?;
                let z = head.forward(t, *hs.last().unwrap())?;
                let p = t.softmax(z)?;
                t.cross_entropy(p, &[2])
            },
            &params,
            H,
            TOL,
        )
        .unwrap();
        assert!(r.passed(), "enrich {enrich:?}: {:.3e}", r.max_rel_error);
    }
}

#[test]
fn every_variant_passes_gradient_check() {
    let dims = ModelDims::new(2, 3).with_enrichment(3, 3).with_hidden(4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<(Tensor, Tensor)> = (0..2).map(|_| (series(&mut rng, 3, 2), series(&mut rng, 2, 3))).collect();
    let pairs: Vec<(&Tensor, &Tensor)> = data.iter().map(|(a, b)| (a, b)).collect();
    let batch = SeriesBatch::new(&pairs).unwrap();
    for variant in ModelVariant::ablation_order() {
        let m = Hob2sRnn::build(variant, dims, 3, 4).unwrap();
        let r = finite_diff_check(
            |t| {
                let out = m.forward_batch(t, &batch)?;
                total_loss(t, &out, &[2, 0])
            },
            &m.params(),
            H,
            TOL,
        )
        .unwrap();
        assert!(r.passed(), "{variant}: {:.3e} at {:?}", r.max_rel_error, r.worst);
    }
}

#[test]
fn gradients_reach_every_parameter() {
    let dims = ModelDims::new(2, 3).with_enrichment(3, 3).with_hidden(4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (r, o) = (series(&mut rng, 3, 2), series(&mut rng, 2, 3));
    let m = Hob2sRnn::build(ModelVariant::full(), dims, 3, 1).unwrap();
    let mut t = Tape::new();
    let out = m.forward(&mut t, &r, &o).unwrap();
    let l = total_loss(&mut t, &out, &[1]).unwrap();
    t.backward(l).unwrap();
    for (name, p) in m.named_params() {
        let g = p.grad();
        assert!(g.data().iter().any(|&x| x != 0.0), "{name} got no gradient");
    }
}
