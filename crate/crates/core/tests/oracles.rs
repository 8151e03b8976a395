use mimo_jscc_core::channel::{generate_channel, sample_channel_entries, snr_to_noise_variance, ClusterConfig};
use mimo_jscc_core::codec::{CodecSpec, JsccCodec};
use mimo_jscc_core::evaluator::{Evaluator, LabeledImage};
use mimo_jscc_core::image::{synthesize_images, ImageDims};
use mimo_jscc_core::link::{draw_image_link, CsiFeedback, LinkEnvironment};
use mimo_jscc_core::quantizer::{fit_lloyd_max, nmse, pooled_parts, quantize_csi, uniform_codebook, LloydMaxOptions};
use mimo_jscc_core::rng::{stream, Purpose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Lloyd iteration on a fine grid of the standard normal density.
fn gaussian_lloyd_max_mse(bits: u32) -> f64 {
    let n = 400_001;
    let (lo, hi) = (-10.0f64, 10.0f64);
    let dx = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
    let ws: Vec<f64> = xs
        .iter()
        .map(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * dx)
        .collect();
    let levels_n = 1usize << bits;
    let mut levels: Vec<f64> = (0..levels_n)
        .map(|i| -3.0 + 6.0 * (i as f64 + 0.5) / levels_n as f64)
        .collect();
    let mut mse = f64::INFINITY;
    for _ in 0..2000 {
        let thresholds: Vec<f64> = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut num = vec![0.0; levels_n];
        let mut den = vec![0.0; levels_n];
        let mut err = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            let cell = thresholds.iter().take_while(|&&t| *x > t).count();
            num[cell] += w * x;
            den[cell] += w;
            err += w * (x - levels[cell]).powi(2);
        }
        for c in 0..levels_n {
            levels[c] = num[c] / den[c];
        }
        if (mse - err).abs() < 1e-13 {
            mse = err;
            break;
        }
        mse = err;
    }
    mse
}

const LLOYD_1BIT: f64 = 0.363_380_227_632_418_4;
const LLOYD_2BIT: f64 = 0.117_482_837_738_933_3;

#[test]
fn grid_oracle_matches_frozen_values() {
    assert!((LLOYD_1BIT - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-15);
    assert!((gaussian_lloyd_max_mse(1) - LLOYD_1BIT).abs() < 1e-6);
    assert!((gaussian_lloyd_max_mse(2) - LLOYD_2BIT).abs() < 1e-6);
}

#[test]
fn sample_fit_approaches_gaussian_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let samples: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let one = fit_lloyd_max(&samples, 1, LloydMaxOptions::default()).unwrap();
    let two = fit_lloyd_max(&samples, 2, LloydMaxOptions::default()).unwrap();
    assert!((one.final_mse() / LLOYD_1BIT - 1.0).abs() < 0.01, "{}", one.final_mse());
    assert!((two.final_mse() / LLOYD_2BIT - 1.0).abs() < 0.02, "{}", two.final_mse());
}

#[test]
fn channel_energy_matches_array_product() {
    let config = ClusterConfig::mmwave(8, 4).unwrap();
    let mut rng = stream(5, Purpose::Experiment, 0);
    let draws = 20_000;
    let mean: f64 = (0..draws)
        .map(|_| sample_channel_entries(&config, &mut rng).frobenius_norm_sqr())
        .sum::<f64>()
        / draws as f64;
    assert!((mean / 32.0 - 1.0).abs() < 0.03, "{mean}");
}

#[test]
fn nmse_decreases_with_bits() {
    let config = ClusterConfig::mmwave(16, 16).unwrap();
    let mut rng = stream(1, Purpose::Codebook, 0);
    let fit_set: Vec<_> = (0..200).map(|_| sample_channel_entries(&config, &mut rng)).collect();
    let samples = pooled_parts(fit_set.iter());
    let channels: Vec<_> = (0..200).map(|_| generate_channel(&config, &mut rng)).collect();
    let mut prev = f64::INFINITY;
    for bits in [2u8, 4, 6, 8] {
        let book = fit_lloyd_max(&samples, bits, LloydMaxOptions::default()).unwrap().codebook;
        let mean: f64 = channels
            .iter()
            .map(|h| nmse(h, &quantize_csi(h, &book).into_reconstructed()).unwrap())
            .sum::<f64>()
            / channels.len() as f64;
        assert!(mean < prev, "{bits} bits: {mean} ≥ {prev}");
        prev = mean;
    }
    let uniform = uniform_codebook(0.0, 1.0 / 2f64.sqrt(), 4).unwrap();
    let lloyd = fit_lloyd_max(&samples, 4, LloydMaxOptions::default()).unwrap();
    assert!(lloyd.final_mse() < uniform.mse(&samples));
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

fn check_gradient(params: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let i = rng.random_range(0..params.len());
        let mut p = params.to_vec();
        p[i] = params[i] + h;
        let up = loss(&p);
        p[i] = params[i] - h;
        let down = loss(&p);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[test]
fn codec_gradient_through_normalization_and_mismatched_link() {
    let spec = CodecSpec {
        dims: ImageDims::new(2, 2, 3),
        symbol_count: 5,
        hidden: 7,
    };
    let codec = JsccCodec::new(spec, 3).unwrap();
    let images = synthesize_images(4, spec.dims, 0.5, 8).unwrap();
    let env = LinkEnvironment::new(ClusterConfig::mmwave(4, 4).unwrap(), 2).unwrap();
    let mut rng = stream(2, Purpose::Codebook, 0);
    let parts = pooled_parts((0..100).map(|_| sample_channel_entries(&env.channel, &mut rng)).collect::<Vec<_>>().iter());
    let book = fit_lloyd_max(&parts, 2, LloydMaxOptions::default()).unwrap().codebook;
    let noise = snr_to_noise_variance(6.0).unwrap();
    let links: Vec<_> = (0..images.len())
        .map(|_| {
            draw_image_link(&env, CsiFeedback::Quantized(&book), Some(&noise), spec.symbol_count, &mut rng)
                .unwrap()
                .realization
        })
        .collect();
    let (_, grad) = codec.loss_and_gradient(&images, &links).unwrap();
    let params = codec.params();
    let worst = check_gradient(
        &params,
        &grad,
        |p| {
            let mut c = codec.clone();
            c.set_params(p).unwrap();
            c.loss_and_gradient(&images, &links).unwrap().0
        },
        11,
    );
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn evaluator_gradient() {
    let dims = ImageDims::new(4, 4, 3);
    let images = synthesize_images(6, dims, 0.5, 2).unwrap();
    let batch: Vec<LabeledImage> = images
        .into_iter()
        .enumerate()
        .map(|(i, image)| LabeledImage {
            image,
            true_psnr_db: 15.0 + 2.0 * i as f64,
        })
        .collect();
    let ev = Evaluator::desk(dims.len(), 6).unwrap();
    let (_, grad) = ev.loss_and_gradient(&batch).unwrap();
    let params = ev.params().to_vec();
    let worst = check_gradient(
        &params,
        &grad,
        |p| {
            let mut e = ev.clone();
            e.set_params(p).unwrap();
            e.loss_and_gradient(&batch).unwrap().0
        },
        12,
    );
    assert!(worst < 1e-4, "max relative error {worst}");
}
