use super::*;
use crate::corpus::UserContext;
use crate::nn::{max_relative_error, numeric_grad};
use rand::Rng;

pub(crate) fn tiny_config(seed: u64, beta: f64, temperature: f64) -> NarConfig {
    NarConfig {
        batch_size: 4,
        learning_rate: 1e-2,
        reg_l2: 1e-3,
        softmax_temperature: temperature,
        car_embedding_size: 4,
        rnn_units: 3,
        rnn_num_layers: 2,
        beta,
        psi_hidden: vec![5],
        phi_hidden: vec![4, 3],
        id_embedding_size: 3,
        category_embedding_size: 2,
        context_embedding_size: 2,
        one_hot_max: 3,
        train_negatives: 3,
        seed,
    }
}

pub(crate) fn tiny_spec() -> NarInputSpec {
    NarInputSpec { n_articles: 8, ace_dim: 3, n_categories: 4, context_cardinalities: [2, 5, 1, 3, 2, 2, 4] }
}

pub(crate) fn tiny_catalog(seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Catalog::new();
    for i in 0..8 {
        let id = c.upsert(&format!("a{i}"), 0, vec![], Some(i % 4), vec![]);
        c.set_ace(id, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    }
    c
}

fn feat<R: Rng>(rng: &mut R) -> ArticleFeatures {
    let pop: f64 = rng.gen_range(0.0..0.5);
    ArticleFeatures {
        recent_clicks: rng.gen_range(0..10),
        rec_norm_pop: pop,
        novelty: -(pop + 1.0).log2(),
        novelty_z: rng.gen_range(-1.5..1.5),
        recency: rng.gen_range(0.0..1.0),
        recency_z: rng.gen_range(-1.5..1.5),
    }
}

fn ctx<R: Rng>(rng: &mut R) -> UserContext {
    let mut c = UserContext::at(1_538_654_400 + rng.gen_range(0..86_400 * 7), 0);
    c.country = rng.gen_range(0..2);
    c.region = rng.gen_range(0..5);
    c.device = rng.gen_range(0..3);
    c.referrer = rng.gen_range(0..4);
    c
}

pub(crate) fn tiny_batch(seed: u64, n_sessions: usize, n_neg: usize) -> Vec<TrainSession> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    (0..n_sessions)
        .map(|_| {
            let len = rng.gen_range(2..5);
            let mut arts: Vec<u32> = (0..8).collect();
            use rand::seq::SliceRandom;
            arts.shuffle(&mut rng);
            let clicks: Vec<TrainClick> = arts[..len]
                .iter()
                .map(|&a| TrainClick { article: ArticleId(a), features: feat(&mut rng), context: ctx(&mut rng) })
                .collect();
            let steps = (0..len)
                .map(|t| {
                    if t + 1 == len {
                        return TrainStep::default();
                    }
                    let mut cands = vec![clicks[t + 1].article];
                    for &a in arts[len..].iter().take(n_neg) {
                        cands.push(ArticleId(a));
                    }
                    let features = cands.iter().map(|_| feat(&mut rng)).collect();
                    TrainStep { candidates: cands, features }
                })
                .collect();
            TrainSession { clicks, steps }
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences with ε = 1e-5. Every parameter, biases included, is drawn
/// from U(-0.5, 0.5) so that no leaky unit starts at its kink.
pub(crate) fn gradient_check(seed: u64, beta: f64, temperature: f64) -> f64 {
    let catalog = tiny_catalog(seed);
    let mut model = NarModel::new(tiny_config(seed, beta, temperature), tiny_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let values: Vec<f64> = (0..model.store.n_scalars()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    model.store.set_flat_values(&values);
    let batch = tiny_batch(seed, 3, 3);
    model.compute_gradients(&catalog, &batch).unwrap();
    let analytic = model.store.flat_grads();
    let numeric = numeric_grad(&model.store, 1e-5, |s| model.batch_loss(s, &catalog, &batch).unwrap().total);
    max_relative_error(&analytic, &numeric, 1e-6)
}

#[test]
fn total_gradient_matches_finite_differences() {
    for seed in 0..3 {
        for beta in [0.0, 0.2, 0.5] {
            for temp in [0.1, 1.0] {
                let e = gradient_check(seed, beta, temp);
                assert!(e < 1e-4, "seed {seed} beta {beta} temp {temp}: {e}");
            }
        }
    }
}

#[test]
fn beta_derivative_is_minus_novelty() {
    let catalog = tiny_catalog(4);
    let batch = tiny_batch(4, 3, 3);
    let at = |beta: f64| {
        let m = NarModel::new(tiny_config(4, beta, 0.5), tiny_spec()).unwrap();
        m.batch_loss(&m.store, &catalog, &batch).unwrap()
    };
    let (lo, hi) = (at(0.3 - 1e-6), at(0.3 + 1e-6));
    let d = (hi.total - lo.total) / 2e-6;
    assert!((d + at(0.3).novelty).abs() < 1e-7);
    let zero = at(0.0);
    assert!((zero.total - (zero.accuracy + zero.l2)).abs() < 1e-15);
}

#[test]
fn relevance_gradient_wrt_nae() {
    let m = NarModel::new(tiny_config(2, 0.0, 1.0), tiny_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let caes = crate::nn::init_uniform(&mut rng, 5, 4, 1);
    let nae = Array1::from_iter((0..4).map(|_| rng.gen_range(-1.0..1.0)));
    let x = &caes * &nae.view().insert_axis(Axis(0));
    let (_, caches) = m.phi.forward_train(&m.store, &x);
    let mut scratch = m.store.clone();
    let dx = m.phi.backward(&mut scratch, &caches, &Array2::ones((5, 1)));
    let analytic: Vec<f64> = (0..4).map(|j| (0..5).map(|i| dx[[i, j]] * caes[[i, j]]).sum()).collect();
    let f = |v: &Array1<f64>| m.relevance(&m.store, v.view(), &caes).iter().sum::<f64>();
    let numeric: Vec<f64> = (0..4)
        .map(|j| {
            let (mut up, mut dn) = (nae.clone(), nae.clone());
            up[j] += 1e-5;
            dn[j] -= 1e-5;
            (f(&up) - f(&dn)) / 2e-5
        })
        .collect();
    assert!(max_relative_error(&analytic, &numeric, 1e-6) < 1e-4);
}

#[test]
fn cae_is_deterministic_and_novelty_sensitive() {
    let catalog = tiny_catalog(1);
    let m = NarModel::new(tiny_config(1, 0.0, 1.0), tiny_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = ctx(&mut rng);
    let f = feat(&mut rng);
    let a = m.article_input(&catalog, ArticleId(2), &f, &c, false);
    let x = m.build_cae(&m.store, &[a]);
    assert_eq!(x, m.build_cae(&m.store, &[a]));
    assert_eq!(x.ncols(), 4);
    let b = ArticleInput { novelty_z: a.novelty_z + 0.5, ..a };
    let y = m.build_cae(&m.store, &[b]);
    assert!((&x - &y).iter().map(|v| v.abs()).sum::<f64>() > 1e-8);
}

#[test]
fn table_configuration_gives_wide_embeddings() {
    let spec = NarInputSpec { n_articles: 3, ace_dim: 8, n_categories: 4, context_cardinalities: [2; 7] };
    let m = NarModel::new(NarConfig::default(), spec).unwrap();
    let catalog = tiny_catalog(0);
    let c = UserContext::at(0, 0);
    let a = m.article_input(&catalog, ArticleId(0), &ArticleFeatures::default(), &c, false);
    assert_eq!(m.build_cae(&m.store, &[a]).ncols(), 1024);
}

#[test]
fn nae_depends_on_prefix() {
    let catalog = tiny_catalog(3);
    let m = NarModel::new(tiny_config(3, 0.0, 1.0), tiny_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = ctx(&mut rng);
    let (f1, f2) = (feat(&mut rng), feat(&mut rng));
    let a = m.article_input(&catalog, ArticleId(1), &f1, &c, false);
    let b = m.article_input(&catalog, ArticleId(5), &f2, &c, false);
    let one = m.predict_nae(&m.store, &m.build_cae(&m.store, &[a])).unwrap();
    let two = m.predict_nae(&m.store, &m.build_cae(&m.store, &[a, b])).unwrap();
    assert_eq!(one.len(), 4);
    assert!((&one - &two).iter().map(|v| v.abs()).sum::<f64>() > 1e-8);
    assert_eq!(one, m.predict_nae(&m.store, &m.build_cae(&m.store, &[a])).unwrap());
    assert!(matches!(m.predict_nae(&m.store, &Array2::zeros((0, 4))), Err(NarError::EmptyPrefix)));
}

#[test]
fn relevance_has_no_cross_candidate_interaction() {
    let m = NarModel::new(tiny_config(5, 0.0, 1.0), tiny_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let caes = crate::nn::init_uniform(&mut rng, 3, 4, 1);
    let zero = Array1::zeros(4);
    let r0 = m.relevance(&m.store, zero.view(), &caes);
    assert!(r0.iter().all(|v| (v - r0[0]).abs() < 1e-15));
    let nae = Array1::from(vec![0.3, -0.2, 0.9, 0.1]);
    let r = m.relevance(&m.store, nae.view(), &caes);
    let swapped = caes.select(Axis(0), &[2, 1, 0]);
    let rs = m.relevance(&m.store, nae.view(), &swapped);
    assert_eq!((r[0], r[1], r[2]), (rs[2], rs[1], rs[0]));
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let catalog = tiny_catalog(6);
    let mut cfg = tiny_config(6, 0.2, 0.5);
    cfg.learning_rate = 0.0;
    let mut m = NarModel::new(cfg, tiny_spec()).unwrap();
    let mut adam = Adam::new(AdamConfig { learning_rate: 0.0, ..AdamConfig::default() }, &m.store);
    let before = m.store.checksum();
    m.train_step(&mut adam, &catalog, &tiny_batch(6, 3, 3)).unwrap();
    assert_eq!(before, m.store.checksum());
}

pub(crate) fn overfit(seed: u64, steps: usize) -> (f64, f64, bool) {
    let catalog = tiny_catalog(seed);
    let mut m = NarModel::new(tiny_config(seed, 0.2, 1.0), tiny_spec()).unwrap();
    let mut adam = Adam::new(AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() }, &m.store);
    let batch = tiny_batch(seed, 4, 3);
    let first = m.batch_loss(&m.store, &catalog, &batch).unwrap().total;
    for _ in 0..steps {
        m.train_step(&mut adam, &catalog, &batch).unwrap();
    }
    let last = m.batch_loss(&m.store, &catalog, &batch).unwrap().total;
    (first, last, m.store.all_finite())
}

#[test]
fn repeated_batch_is_memorized() {
    let (first, last, finite) = overfit(7, 100);
    assert!(finite);
    assert!(last <= 0.5 * first, "{first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let catalog = tiny_catalog(9);
        let mut r = NarRecommender::new(tiny_config(9, 0.1, 0.5), tiny_spec()).unwrap();
        for s in tiny_batch(9, 10, 3) {
            r.enqueue(s);
        }
        r.train_pending(&catalog, true).unwrap();
        r.model.store.checksum()
    };
    assert_eq!(run(), run());
}

#[test]
fn fresh_articles_get_finite_scores() {
    let catalog = tiny_catalog(10);
    let mut r = NarRecommender::new(tiny_config(10, 0.0, 1.0), tiny_spec()).unwrap();
    let batch = tiny_batch(10, 2, 1);
    let seen: Vec<ArticleId> = batch.iter().flat_map(|s| s.clicks.iter().map(|c| c.article)).collect();
    for s in batch {
        r.enqueue(s);
    }
    r.train_pending(&catalog, true).unwrap();
    let fresh = (0..8).map(ArticleId).find(|a| !r.model.is_trained(*a)).expect("an untrained article");
    assert!(!seen.contains(&fresh));
    let c = UserContext::at(0, 0);
    let f = ArticleFeatures::default();
    let m = &r.model;
    let prefix = [m.article_input(&catalog, seen[0], &f, &c, false)];
    let cands = [m.article_input(&catalog, fresh, &f, &c, false)];
    assert_eq!(cands[0].id_row, 0);
    assert!(m.score_inputs(&prefix, &cands).unwrap()[0].is_finite());
}

#[test]
fn checkpoint_round_trip() {
    let a = NarModel::new(tiny_config(11, 0.0, 1.0), tiny_spec()).unwrap();
    let mut b = NarModel::new(tiny_config(12, 0.0, 1.0), tiny_spec()).unwrap();
    assert_ne!(a.store.checksum(), b.store.checksum());
    let mut buf = Vec::new();
    a.save(&mut buf).unwrap();
    b.load(buf.as_slice()).unwrap();
    assert_eq!(a.store.checksum(), b.store.checksum());
}

#[test]
fn rejects_bad_config() {
    let mut cfg = tiny_config(0, 0.0, 1.0);
    cfg.softmax_temperature = 0.0;
    assert!(NarModel::new(cfg.clone(), tiny_spec()).is_err());
    cfg.softmax_temperature = 1.0;
    cfg.beta = -0.1;
    assert!(NarModel::new(cfg, tiny_spec()).is_err());
}

#[test]
fn missing_positive_steps_are_skipped() {
    let mut batch = tiny_batch(13, 1, 2);
    let n = batch[0].n_valid();
    batch[0].steps[0].candidates[0] = batch[0].steps[0].candidates[1];
    assert_eq!(batch[0].n_valid(), n - 1);
}

