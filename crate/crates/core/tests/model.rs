use proptest::prelude::*;
use radfed_autodiff::{Role, Tensor};
use radfed_core::*;

fn tiny() -> ResidualCnnConfig {
    ResidualCnnConfig {
        input_channels: 3,
        input_size: (16, 16),
        stem_channels: 4,
        block_channels: vec![4, 8, 8, 16],
        head_hidden: 6,
        num_classes: 2,
    }
}

/// Parameter count derived from the layer plan alone.
fn closed_form(cfg: &ResidualCnnConfig) -> ParameterCounts {
    let conv = |o: usize, i: usize, k: usize| o * i * k * k + o;
    let mut base = conv(cfg.stem_channels, cfg.input_channels, 3);
    let mut c = cfg.stem_channels;
    for &o in &cfg.block_channels {
        base += conv(o, c, 3) + conv(o, o, 3);
        if o != c {
            base += conv(o, c, 1);
        }
        c = o;
    }
    let h = cfg.head_hidden;
    let head = (h * c + h) + (cfg.num_classes * h + cfg.num_classes);
    ParameterCounts { total: base + head, base, head }
}

#[test]
fn default_head_has_16770_parameters() {
    let model = build_model(&ResidualCnnConfig::default(), 0).unwrap();
    let counts = count_parameters(&model);
    assert_eq!(counts.head, 128 * 128 + 128 + 2 * 128 + 2);
    assert_eq!(counts.head, 16_770);
    assert_eq!(counts, closed_form(&ResidualCnnConfig::default()));
    assert_eq!(counts.base, 597_344);
}

#[test]
fn single_hidden_unit_head_matches_closed_form() {
    let cfg = ResidualCnnConfig { head_hidden: 1, ..ResidualCnnConfig::default() };
    let counts = count_parameters(&build_model(&cfg, 0).unwrap());
    assert_eq!(counts.head, (cfg.feature_channels() + 1) + (2 + 2));
    assert_eq!(counts, closed_form(&cfg));
}

#[test]
fn same_seed_same_parameters() {
    let a = build_model(&tiny(), 42).unwrap();
    let b = build_model(&tiny(), 42).unwrap();
    let c = build_model(&tiny(), 43).unwrap();
    let bits = |m: &PartitionedModel| m.flatten(Share::Full).values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn partition_covers_every_parameter_once() {
    let model = build_model(&ResidualCnnConfig::default(), 1).unwrap();
    assert!(model.base_ids().is_disjoint(model.head_ids()));
    assert_eq!(model.base_ids().len() + model.head_ids().len(), model.parameters().len());
    for p in model.parameters() {
        let in_head = model.head_ids().contains(&p.id());
        assert_eq!(in_head, p.role() == Role::Head);
        assert_eq!(in_head, model.name(p.id()).unwrap().starts_with("head."));
    }
}

#[test]
fn base_round_trip_into_fresh_model() {
    let src = build_model(&tiny(), 1).unwrap();
    let mut dst = build_model(&tiny(), 2).unwrap();
    let base = src.flatten(Share::Base);
    assert_eq!(base.len(), count_parameters(&src).base);
    assert!(base.ids().all(|id| src.base_ids().contains(&id)));
    let head_before = dst.flatten(Share::Full).values[base.len()..].to_vec();
    dst.load(Share::Base, &base).unwrap();
    assert_eq!(dst.flatten(Share::Base), base);
    let after = dst.flatten(Share::Full);
    assert_eq!(after.values[base.len()..], head_before[..]);
    assert_ne!(after.values[base.len()..], src.flatten(Share::Full).values[base.len()..]);
}

#[test]
fn full_round_trip_reproduces_model() {
    let src = build_model(&tiny(), 5).unwrap();
    let mut dst = build_model(&tiny(), 6).unwrap();
    dst.load(Share::Full, &src.flatten(Share::Full)).unwrap();
    assert_eq!(dst, src);
}

#[test]
fn mismatched_layout_is_rejected() {
    let mut model = build_model(&tiny(), 1).unwrap();
    let full = model.flatten(Share::Full);
    assert!(matches!(model.load(Share::Base, &full), Err(ModelError::LayoutMismatch(_))));
    let other = build_model(&ResidualCnnConfig { head_hidden: 7, ..tiny() }, 1).unwrap();
    assert!(model.load(Share::Full, &other.flatten(Share::Full)).is_err());
    let mut short = model.flatten(Share::Base);
    short.values.pop();
    assert!(model.load(Share::Base, &short).is_err());
}

#[test]
fn blocks_halve_resolution_and_widen() {
    let cfg = ResidualCnnConfig::default();
    assert_eq!(cfg.stage_sizes(), vec![(32, 32), (16, 16), (8, 8), (4, 4)]);
    let shrinking = ResidualCnnConfig { block_channels: vec![32, 64, 32, 128], ..cfg.clone() };
    assert!(matches!(build_model(&shrinking, 0), Err(ModelError::InvalidConfig(_))));
    let three = ResidualCnnConfig { block_channels: vec![32, 64, 128], ..cfg };
    assert!(build_model(&three, 0).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let model = build_model(&tiny(), 9).unwrap();
    let mut buf = Vec::new();
    model.save_checkpoint(&mut buf).unwrap();
    let back = PartitionedModel::load_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back, model);
    buf[0] = b'X';
    assert!(matches!(PartitionedModel::load_checkpoint(buf.as_slice()), Err(ModelError::Checkpoint(_))));
}

#[test]
fn forward_is_deterministic() {
    let model = build_model(&tiny(), 4).unwrap();
    let x = Tensor::new(vec![2, 3, 16, 16], (0..1536).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let a = model.logits(x.clone()).unwrap();
    let b = model.logits(x).unwrap();
    assert_eq!(a, b);
    assert!(a.is_finite());
}

#[test]
fn gradients_cover_every_parameter() {
    let mut model = build_model(&tiny(), 4).unwrap();
    let x = Tensor::new(vec![2, 3, 16, 16], (0..1536).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
    let loss = model.loss_and_grad(x, &[0, 1]).unwrap();
    assert!(loss > 0.0);
    for p in model.parameters() {
        assert_eq!(p.tensor.grad().map(|g| g.len()), Some(p.len()));
    }
}

fn arb_config() -> impl Strategy<Value = ResidualCnnConfig> {
    (1usize..4, 1usize..6, prop::collection::vec(0usize..4, 4), 1usize..10, 16usize..24).prop_map(
        |(cin, stem, steps, hidden, size)| {
            let mut c = stem;
            let blocks = steps
                .iter()
                .map(|s| {
                    c += s;
                    c
                })
                .collect();
            ResidualCnnConfig {
                input_channels: cin,
                input_size: (size, size + 1),
                stem_channels: stem,
                block_channels: blocks,
                head_hidden: hidden,
                num_classes: 2,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counts_partition_for_any_config(cfg in arb_config(), seed in any::<u64>()) {
        let model = build_model(&cfg, seed).unwrap();
        let counts = count_parameters(&model);
        prop_assert_eq!(counts.total, counts.base + counts.head);
        prop_assert_eq!(counts, closed_form(&cfg));
    }

    #[test]
    fn loading_base_never_touches_head(cfg in arb_config(), a in any::<u64>(), b in any::<u64>()) {
        let src = build_model(&cfg, a).unwrap();
        let mut dst = build_model(&cfg, b).unwrap();
        let head = |m: &PartitionedModel| m
            .parameters()
            .iter()
            .filter(|p| m.head_ids().contains(&p.id()))
            .flat_map(|p| p.tensor.data().iter().map(|v| v.to_bits()))
            .collect::<Vec<_>>();
        let before = head(&dst);
        dst.load(Share::Base, &src.flatten(Share::Base)).unwrap();
        prop_assert_eq!(head(&dst), before);
    }

    #[test]
    fn logits_are_n_by_two(cfg in arb_config(), n in 1usize..3) {
        let model = build_model(&cfg, 0).unwrap();
        let (h, w) = cfg.input_size;
        let x = Tensor::zeros(vec![n, cfg.input_channels, h, w]).unwrap();
        let z = model.logits(x).unwrap();
        prop_assert_eq!(z.shape(), &[n, 2]);
    }
}
