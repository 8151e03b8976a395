use std::path::Path;

use mimo_jscc::cifar::{self, RECORD_LEN};
use mimo_jscc::formats::{self, ChannelDump, Checkpoint, LabelRow};
use mimo_jscc::pipeline::{Figure, MetricsRecord};
use mimo_jscc::{ExperimentConfig, SimError, Workspace};
use mimo_jscc_core::codec::{CodecSpec, JsccCodec};
use mimo_jscc_core::feedback::DegradationTable;
use mimo_jscc_core::image::ImageDims;
use mimo_jscc_core::linalg::{CMatrix, C64};
use mimo_jscc_core::quantizer::CsiCodebook;
use proptest::prelude::*;

fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
version = 1
[channel]
num_tx = 4
num_rx = 4
[codec]
height = 2
width = 2
channels = 3
symbols = 4
hidden = 8
[training]
epochs = 1
batch_size = 16
[evaluator]
hidden = 4
epochs = 2
label_realizations = 1
[quantizer]
bits = [5, 6, 7]
fit_channels = 50
[dataset]
source = "synthetic"
train_count = 32
test_count = 16
validation_count = 4
texture_fraction = 0.5
seed = 3
[sweep]
seeds = [0, 1]
snr_db = [0.0, 6.0]
antennas = [[4, 4]]
predictor = "learned"
"#,
    )
    .unwrap()
}

#[test]
fn cifar_batch_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.bin");
    let mut bytes = Vec::new();
    for r in 0..4u32 {
        bytes.push(r as u8);
        bytes.extend((0..RECORD_LEN as u32 - 1).map(|k| (k * 7 + r * 31) as u8));
    }
    std::fs::write(&path, &bytes).unwrap();
    let images = cifar::load_cifar_binary(&path, 100).unwrap();
    assert_eq!(images.len(), 4);
    assert_eq!(images[3].source_id(), 103);
    let again = dir.path().join("again.bin");
    cifar::write_cifar_binary(&again, &images).unwrap();
    let reread = std::fs::read(&again).unwrap();
    // Labels are not kept, everything else is.
    for (a, b) in bytes.chunks(RECORD_LEN).zip(reread.chunks(RECORD_LEN)) {
        assert_eq!(a[1..], b[1..]);
    }
    let crops = cifar::load_cropped(&path, 0, 8, 8).unwrap();
    assert_eq!(crops[0].dims(), ImageDims::new(8, 8, 3));
    assert_eq!(crops[0].pixels()[0], images[0].pixels()[(12 * 32 + 12) * 3]);
}

#[test]
fn truncated_cifar_file_names_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.bin");
    std::fs::write(&path, vec![0u8; RECORD_LEN + 100]).unwrap();
    match cifar::load_cifar_binary(&path, 0) {
        Err(SimError::Truncated { offset, .. }) => assert_eq!(offset, RECORD_LEN as u64),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn codec_checkpoint_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("codec.ckpt");
    let spec = CodecSpec {
        dims: ImageDims::new(2, 2, 3),
        symbol_count: 4,
        hidden: 5,
    };
    let codec = JsccCodec::new(spec, 9).unwrap();
    Checkpoint::from_codec(&codec, "hash").write(&path).unwrap();
    let ckpt = Checkpoint::read(&path).unwrap();
    assert_eq!(ckpt.config_hash, "hash");
    let back = ckpt.to_codec(&path).unwrap();
    assert_eq!(back.params(), codec.params());
    assert_eq!(back.spec(), codec.spec());
    assert!(ckpt.to_evaluator(&path).is_err());
}

#[test]
fn labels_and_penalties_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    let rows = vec![
        LabelRow {
            source_id: 1,
            true_psnr_db: 21.123456789012345,
            snr_db: 6.0,
            realizations: 4,
        },
        LabelRow {
            source_id: 9,
            true_psnr_db: 0.1 + 0.2,
            snr_db: -6.0,
            realizations: 4,
        },
    ];
    formats::write_csv(&labels, &rows).unwrap();
    let back: Vec<LabelRow> = formats::read_csv(&labels).unwrap();
    assert_eq!(back, rows);
    let header = std::fs::read_to_string(&labels).unwrap();
    assert!(header.starts_with("source_id,true_psnr_db,snr_db,realizations\n"));

    let pen = dir.path().join("pen.csv");
    let table = DegradationTable::new([(7, 0.0), (6, 0.0125), (5, 1.0 / 3.0)]).unwrap();
    formats::write_degradation(&pen, &table).unwrap();
    assert_eq!(formats::read_degradation(&pen).unwrap(), table);
}

#[test]
fn workspace_caches_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config();
    let ws = Workspace::new(config.clone(), Some(dir.path())).unwrap();
    let first = ws.run_figure_sweep(Figure::Fig6, &[0, 1]).unwrap();
    assert!(first.passed(), "{:?}", first.violations);
    let art = dir.path().join(format!("artifacts-{}", ws.hash));
    for name in ["codebook_5.txt", "codec_4x4.ckpt", "labels_test.csv", "labels_train.csv", "evaluator.ckpt", "degradation.csv"] {
        assert!(art.join(name).exists(), "{name}");
    }
    // Second run reads every artifact back.
    let ws2 = Workspace::new(config.clone(), Some(dir.path())).unwrap();
    let second = ws2.run_figure_sweep(Figure::Fig6, &[0, 1]).unwrap();
    assert_eq!(formats::csv_string(&first.records).unwrap(), formats::csv_string(&second.records).unwrap());
    // And without any cache the numbers are the same.
    let fresh = Workspace::new(config, None).unwrap().run_figure_sweep(Figure::Fig6, &[1]).unwrap();
    let seed1: Vec<&MetricsRecord> = first.records.iter().filter(|r| r.seed == 1).collect();
    assert_eq!(seed1.len(), fresh.records.len());
    for (a, b) in seed1.into_iter().zip(&fresh.records) {
        assert_eq!(formats::csv_string(&[a]).unwrap(), formats::csv_string(&[b]).unwrap());
    }
}

#[test]
fn stale_codebook_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(tiny_config(), Some(dir.path())).unwrap();
    ws.codebooks().unwrap();
    let path = dir.path().join(format!("artifacts-{}", ws.hash)).join("codebook_6.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace(&ws.hash, "000000000000")).unwrap();
    assert!(matches!(ws.codebooks(), Err(SimError::StaleArtifact { .. })));
}

#[test]
fn every_figure_passes_its_checks() {
    let ws = Workspace::new(tiny_config(), None).unwrap();
    let f4 = ws.run_figure_sweep(Figure::Fig4, &[0]).unwrap();
    assert_eq!(f4.records.len(), 2);
    assert!(f4.passed());
    let f5 = ws.run_figure_sweep(Figure::Fig5, &[0, 1]).unwrap();
    assert!(f5.passed(), "{:?}", f5.violations);
    // 3 uniform depths + split, 10 thresholds, 2 seeds.
    assert_eq!(f5.records.len(), 4 * 10 * 2);
    for r in f5.records.iter().filter(|r| r.policy == "group_split") {
        assert_eq!(r.avg_bits, 6.0);
        assert_eq!(r.total_bits, 6 * 16);
    }
}

#[test]
fn channel_dump_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(tiny_config(), None).unwrap();
    let dump = ws.channel_dump(5).unwrap();
    assert_eq!(dump.channels.len(), 16);
    assert_eq!(dump.channels[0].rows(), 4);
    let path = dir.path().join("h.bin");
    formats::write_channels(&path, &dump).unwrap();
    assert_eq!(formats::read_channels(&path).unwrap(), dump);
    assert_eq!(ws.channel_dump(5).unwrap(), dump);
    assert_ne!(ws.channel_dump(6).unwrap(), dump);
}

fn read_back(path: &Path, dump: &ChannelDump) -> ChannelDump {
    formats::write_channels(path, dump).unwrap();
    formats::read_channels(path).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn channel_files_are_bit_exact(
        seed in any::<u64>(),
        rows in 1usize..5,
        cols in 1usize..5,
        bits in prop::collection::vec(any::<u64>(), 32),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).filter(|x| x.is_finite()).collect();
        let h = CMatrix::from_fn(rows, cols, |i, j| {
            let k = i * cols + j;
            C64::new(vals.get(2 * k).copied().unwrap_or(0.0), vals.get(2 * k + 1).copied().unwrap_or(-0.0))
        });
        let dump = ChannelDump { seed, config_hash: format!("{seed:x}"), channels: vec![h.clone(), h] };
        let back = read_back(&dir.path().join("h.bin"), &dump);
        for (a, b) in back.channels.iter().zip(&dump.channels) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        prop_assert_eq!(back.seed, seed);
    }

    #[test]
    fn codebook_text_is_bit_exact(steps in prop::collection::vec(1e-6f64..10.0, 4), start in -50.0f64..50.0) {
        let mut levels = vec![start];
        for s in &steps[..3] {
            levels.push(levels.last().unwrap() + s);
        }
        let thresholds: Vec<f64> = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let book = CsiCodebook::from_parts(2, levels, thresholds, "h".into()).unwrap();
        let back = formats::parse_codebook(Path::new("mem"), &formats::format_codebook(&book)).unwrap();
        for (a, b) in back.levels().iter().zip(book.levels()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back, book);
    }

    #[test]
    fn cifar_records_survive_encode(raw in prop::collection::vec(any::<u8>(), RECORD_LEN - 1)) {
        let mut rec = vec![3u8];
        rec.extend(&raw);
        let images = cifar::parse_records(Path::new("mem"), &rec, 0).unwrap();
        let again = cifar::encode_records(&images).unwrap();
        prop_assert_eq!(&again[1..], &rec[1..]);
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = ExperimentConfig::load(&root.join("desk.toml")).unwrap();
    assert_eq!(desk.hash(), ExperimentConfig::default().hash());
    let cifar = ExperimentConfig::load(&root.join("cifar.toml")).unwrap();
    cifar.validate().unwrap();
}
