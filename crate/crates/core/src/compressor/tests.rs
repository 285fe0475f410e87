use super::*;
use crate::nn::gradcheck::check_param_grads;
use ndarray::Array3;

fn tiny() -> CompressorConfig {
    CompressorConfig {
        channels: 3,
        height: 16,
        width: 16,
        c_feat: 4,
        c_hyper: 4,
        c_z: 4,
        c_v: 3,
        res_blocks: 1,
    }
}

fn images(n: usize, cfg: &CompressorConfig, seed: u64) -> Array4<f64> {
    let mut r = rng::stream(seed, StreamId::aux(1));
    Array4::from_shape_fn((n, cfg.channels, cfg.height, cfg.width), |_| r.gen_range(0.0..1.0))
}

fn model(seed: u64) -> HyperpriorCompressor<f64> {
    let mut r = rng::stream(seed, StreamId::init(1));
    HyperpriorCompressor::new(tiny(), &mut r).unwrap()
}

#[test]
fn cifar_latent_shapes() {
    let cfg = CompressorConfig {
        c_feat: 16,
        ..CompressorConfig::cifar()
    };
    let mut r = rng::stream(1, StreamId::init(1));
    let m = HyperpriorCompressor::<f32>::new(cfg, &mut r).unwrap();
    let x = Array4::from_elem((1, 3, 32, 32), 0.5f32);
    let z = m.analysis(&x).unwrap();
    assert_eq!(z.dim(), (1, 256, 8, 8));
    let v = m.hyper_analysis(&z).unwrap();
    assert_eq!(v.dim(), (1, 192, 2, 2));
    let (mu, sigma) = m.hyper_synthesis(&v.mapv(f32::round_ties_even));
    assert_eq!(mu.dim(), (1, 256, 8, 8));
    assert_eq!(sigma.dim(), (1, 256, 8, 8));
    assert!(sigma.iter().all(|&s| s as f64 >= SIGMA_MIN));
    assert!(m.analysis(&Array4::zeros((1, 3, 16, 16))).is_err());
}

#[test]
fn transforms_are_deterministic_and_finite_at_extremes() {
    let m = model(2);
    for fill in [0.0, 1.0] {
        let x = Array4::from_elem((1, 3, 16, 16), fill);
        let z = m.analysis(&x).unwrap();
        assert!(z.iter().all(|v| v.is_finite()));
        assert_eq!(z, m.analysis(&x).unwrap());
        let v = m.hyper_analysis(&z).unwrap();
        assert!(v.iter().all(|v| v.is_finite()));
        let (mu, sigma) = m.hyper_synthesis(&v.mapv(f64::round_ties_even));
        assert_eq!((mu.clone(), sigma.clone()), m.hyper_synthesis(&v.mapv(f64::round_ties_even)));
        assert!(sigma.iter().all(|&s| s > 0.0));
    }
}

#[test]
fn quantization_modes() {
    let mut r = rng::stream(3, StreamId::aux(0));
    let t = Array4::from_shape_vec((1, 1, 1, 6), vec![2.3, -2.7, 0.5, 1.5, -0.5, 2.5]).unwrap();
    let q = quantize(&t, QuantMode::Round, &mut r);
    assert_eq!(q.as_slice().unwrap(), &[2.0, -3.0, 0.0, 2.0, -0.0, 2.0]);
    let big = Array4::<f64>::from_shape_fn((1, 4, 16, 16), |_| r.gen_range(-10.0..10.0));
    let noisy = quantize(&big, QuantMode::Noise, &mut r);
    assert!(big.iter().zip(noisy.iter()).all(|(a, b)| (a - b).abs() < 0.5));
}

#[test]
fn rate_closed_forms_and_oracle() {
    let r0 = rate_bpp(&[1.0; 10], &[1.0; 3], 32, 32).unwrap();
    assert_eq!(r0.bpp, 0.0);
    let r1 = rate_bpp(&[0.5; 1024], &[], 32, 32).unwrap();
    assert_eq!(r1.bpp, 1.0);
    let mut r = rng::stream(4, StreamId::aux(0));
    let pz: Vec<f64> = (0..500).map(|_| r.gen_range(1e-4..1.0)).collect();
    let pv: Vec<f64> = (0..50).map(|_| r.gen_range(1e-4..1.0)).collect();
    let oracle_z = pz.iter().map(|p| -p.ln() / std::f64::consts::LN_2).sum::<f64>() / 256.0;
    let oracle_v = pv.iter().map(|p| -p.ln() / std::f64::consts::LN_2).sum::<f64>() / 256.0;
    let got = rate_bpp(&pz, &pv, 16, 16).unwrap();
    assert!((got.bpp_z - oracle_z).abs() < 1e-9);
    assert!((got.bpp_v - oracle_v).abs() < 1e-9);
    assert!((got.bpp - oracle_z - oracle_v).abs() < 1e-9);
    assert!(rate_bpp(&[0.0], &[], 4, 4).is_err());
    assert!(rate_bpp(&[0.5], &[1.5], 4, 4).is_err());
}

#[test]
fn jsc_loss_hand_computation() {
    let s = Array4::from_shape_vec((1, 1, 2, 2), vec![0.0, 1.0, 0.5, 0.25]).unwrap();
    let s_hat = Array4::from_shape_vec((1, 1, 2, 2), vec![0.1, 0.9, 0.5, 0.5]).unwrap();
    // squared errors .01 .01 0 .0625 -> mean .020625
    assert!((jsc_loss(&s, &s_hat, 0.5, 100.0).unwrap() - 2.5625).abs() < 1e-12);
    assert_eq!(jsc_loss(&s, &s, 0.0, 3.0).unwrap(), 0.0);
    let a = jsc_loss(&s, &s_hat, 0.0, 10.0).unwrap();
    let b = jsc_loss(&s, &s_hat, 0.0, 20.0).unwrap();
    assert!((b - 2.0 * a).abs() < 1e-12);
    assert!(jsc_loss(&s, &s_hat, 0.0, 0.0).is_err());
}

#[test]
fn compress_round_trip_and_rate_consistency() {
    let m = model(5);
    let cfg = tiny();
    let mut total_actual = 0.0;
    let mut total_model = 0.0;
    for seed in 0..8 {
        let img = ImageTensor::from_batch(&images(1, &cfg, 10 + seed), 0);
        let b = m.compress(&img).unwrap();
        let (v_dec, z_dec) = m.decode_latents(&b).unwrap();
        let (v_ref, z_ref) = m.infer_latents(&img).unwrap();
        assert_eq!(v_dec, v_ref);
        assert_eq!(z_dec, z_ref);
        let parsed = Bitstream::from_bytes(&b.to_bytes()).unwrap();
        let a = m.decompress(&parsed).unwrap();
        assert_eq!(a, m.decompress(&parsed).unwrap());
        assert!(a.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
        total_actual += b.payload_bits() as f64;
        total_model += m.model_bits(&img).unwrap();
    }
    let (actual, modelled) = (total_actual / 8.0, total_model / 8.0);
    assert!(
        (actual - modelled).abs() <= 0.02 * modelled + 64.0,
        "actual {actual} vs model {modelled}"
    );
}

#[test]
fn corrupted_streams_are_rejected() {
    let m = model(6);
    let img = ImageTensor::from_batch(&images(1, &tiny(), 1), 0);
    let mut bytes = m.compress(&img).unwrap().to_bytes();
    bytes[0] ^= 0xFF;
    assert!(Bitstream::from_bytes(&bytes).is_err());
    let mut b = m.compress(&img).unwrap();
    b.dims.c_z += 1;
    assert!(m.decompress(&b).is_err());
    let other = HyperpriorCompressor::<f64>::new(
        CompressorConfig { c_v: 2, ..tiny() },
        &mut rng::stream(1, StreamId::init(1)),
    )
    .unwrap();
    assert!(other.decompress(&m.compress(&img).unwrap()).is_err());
    let _ = Array3::<f64>::zeros((1, 1, 1));
}

#[test]
fn rd_loss_gradients_match_finite_differences() {
    let cfg = tiny();
    let mut rd = RdModel {
        codec: model(7),
        lambda: 50.0,
    };
    let batch = images(2, &cfg, 8);
    let worst = check_param_grads(
        &mut rd,
        |m, train| {
            let mut r = rng::stream(99, StreamId::aux(2));
            if train {
                m.train_batch(&batch, &mut r).loss
            } else {
                let (s_hat, rate) = m.codec.forward_train(&batch, &mut r);
                m.codec.cache = None;
                jsc_loss(&batch, &s_hat, rate.bpp, m.lambda).unwrap()
            }
        },
        5,
        1e-5,
    );
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn rd_loss_input_gradient() {
    let cfg = tiny();
    let mut m = model(8);
    let batch = images(1, &cfg, 9);
    let loss = |m: &mut HyperpriorCompressor<f64>, x: &Array4<f64>| {
        let mut r = rng::stream(5, StreamId::aux(3));
        let (s_hat, rate) = m.forward_train(x, &mut r);
        m.cache = None;
        jsc_loss(&batch, &s_hat, rate.bpp, 30.0).unwrap()
    };
    let mut r = rng::stream(5, StreamId::aux(3));
    let (s_hat, _) = m.forward_train(&batch, &mut r);
    let g = m.backward_train(&mse_grad(&batch, &s_hat, 30.0));
    // the distortion target is held fixed, so only the path through S~ is differentiated
    for idx in [0, 100, 400, 767] {
        let mut up = batch.clone();
        let mut dn = batch.clone();
        up.as_slice_mut().unwrap()[idx] += 1e-6;
        dn.as_slice_mut().unwrap()[idx] -= 1e-6;
        let num = (loss(&mut m, &up) - loss(&mut m, &dn)) / 2e-6;
        let a = g.as_slice().unwrap()[idx];
        assert!((a - num).abs() <= 1e-3 * a.abs().max(num.abs()).max(1e-6), "{a} vs {num}");
    }
}
