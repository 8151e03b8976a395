//! Quality-driven CSI feedback allocation and outage metrics.
//!
//! Images predicted to reconstruct well tolerate coarser CSI, so they get
//! fewer feedback bits; the saved bits go to images near the outage threshold.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::channel::{snr_to_noise_variance, NoiseModel};
use crate::codec::{image_psnr, JsccCodec};
use crate::error::{invalid, Error, Result};
use crate::evaluator::QualityPrediction;
use crate::image::ImageSample;
use crate::link::{draw_image_link, CsiFeedback, LinkEnvironment};
use crate::quantizer::{CsiCodebook, MAX_BITS};
use crate::rng::{stream, Purpose, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AllocationPolicy {
    Uniform,
    GroupSplit,
    MinBitsSearch,
}

impl AllocationPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AllocationPolicy::Uniform => "uniform",
            AllocationPolicy::GroupSplit => "group_split",
            AllocationPolicy::MinBitsSearch => "min_bits_search",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    option_bits: Vec<u8>,
    assignment: BTreeMap<u64, u8>,
    policy: AllocationPolicy,
}

impl AllocationPlan {
    fn new(mut option_bits: Vec<u8>, assignment: BTreeMap<u64, u8>, policy: AllocationPolicy) -> Self {
        option_bits.sort_unstable_by(|a, b| b.cmp(a));
        option_bits.dedup();
        Self {
            option_bits,
            assignment,
            policy,
        }
    }

    /// Allowed bit depths, descending.
    pub fn option_bits(&self) -> &[u8] {
        &self.option_bits
    }

    pub fn assignment(&self) -> &BTreeMap<u64, u8> {
        &self.assignment
    }

    pub fn bits_for(&self, source_id: u64) -> Option<u8> {
        self.assignment.get(&source_id).copied()
    }

    pub fn policy(&self) -> AllocationPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Sum of per-element bit depths over all images.
    pub fn total_bits(&self) -> u64 {
        self.assignment.values().map(|&b| u64::from(b)).sum()
    }

    pub fn average_bits(&self) -> f64 {
        if self.assignment.is_empty() {
            return 0.0;
        }
        self.total_bits() as f64 / self.assignment.len() as f64
    }

    /// Feedback payload in bits over all images for an `rows×cols` channel.
    pub fn payload_bits(&self, rows: usize, cols: usize) -> u64 {
        2 * (rows * cols) as u64 * self.total_bits()
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if (1..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(invalid(format!("bit depth {bits} outside 1..={MAX_BITS}")))
    }
}

fn check_unique_ids(predictions: &[QualityPrediction]) -> Result<()> {
    let mut ids: Vec<u64> = predictions.iter().map(|p| p.source_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("duplicate source ids in predictions"));
    }
    Ok(())
}

pub fn uniform_allocation(predictions: &[QualityPrediction], bits: u8) -> Result<AllocationPlan> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    check_bits(bits)?;
    check_unique_ids(predictions)?;
    let assignment = predictions.iter().map(|p| (p.source_id, bits)).collect();
    Ok(AllocationPlan::new(alloc::vec![bits], assignment, AllocationPolicy::Uniform))
}

/// Splits images into two equal groups by predicted PSNR. The better half
/// gets `low_bits`, the rest `high_bits`; with an odd count the extra image
/// lands in the high-bits group. Ties are ordered by ascending source id.
pub fn group_split_allocation(predictions: &[QualityPrediction], high_bits: u8, low_bits: u8) -> Result<AllocationPlan> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    check_bits(high_bits)?;
    check_bits(low_bits)?;
    if high_bits <= low_bits {
        return Err(invalid("group split needs high_bits > low_bits"));
    }
    check_unique_ids(predictions)?;
    if predictions.iter().any(|p| p.predicted_psnr_db.is_nan()) {
        return Err(invalid("NaN predicted PSNR"));
    }
    let mut order: Vec<&QualityPrediction> = predictions.iter().collect();
    order.sort_by(|a, b| {
        b.predicted_psnr_db
            .total_cmp(&a.predicted_psnr_db)
            .then(a.source_id.cmp(&b.source_id))
    });
    let low_count = predictions.len() / 2;
    let assignment = order
        .iter()
        .enumerate()
        .map(|(rank, p)| (p.source_id, if rank < low_count { low_bits } else { high_bits }))
        .collect();
    Ok(AllocationPlan::new(
        alloc::vec![high_bits, low_bits],
        assignment,
        AllocationPolicy::GroupSplit,
    ))
}

/// PSNR lost (dB) when the transmitter sees `b`-bit CSI instead of perfect CSI.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationTable {
    penalties: BTreeMap<u8, f64>,
}

impl DegradationTable {
    pub fn new(entries: impl IntoIterator<Item = (u8, f64)>) -> Result<Self> {
        let mut penalties = BTreeMap::new();
        for (bits, penalty) in entries {
            if !(penalty.is_finite() && penalty >= 0.0) {
                return Err(Error::MalformedTable(format!("penalty for {bits} bits is {penalty}")));
            }
            if penalties.insert(bits, penalty).is_some() {
                return Err(Error::MalformedTable(format!("duplicate entry for {bits} bits")));
            }
        }
        if penalties.is_empty() {
            return Err(Error::MalformedTable("no entries".into()));
        }
        Ok(Self { penalties })
    }

    pub fn penalty(&self, bits: u8) -> Result<f64> {
        self.penalties
            .get(&bits)
            .copied()
            .ok_or_else(|| Error::MalformedTable(format!("no entry for {bits} bits")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.penalties.iter().map(|(&b, &p)| (b, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageSpec {
    threshold_psnr_db: f64,
}

impl OutageSpec {
    /// `+∞` is accepted (every image is in outage); NaN and `−∞` are not.
    pub fn new(threshold_psnr_db: f64) -> Result<Self> {
        if threshold_psnr_db.is_nan() || threshold_psnr_db == f64::NEG_INFINITY {
            return Err(invalid("outage threshold must be a number"));
        }
        Ok(Self { threshold_psnr_db })
    }

    pub fn threshold_db(&self) -> f64 {
        self.threshold_psnr_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinBitsPlan {
    pub plan: AllocationPlan,
    /// Fraction of images whose predicted PSNR after the penalty of their
    /// assigned depth clears the threshold.
    pub predicted_success_ratio: f64,
    pub target_met: bool,
}

/// Gives each image the smallest option `b` with
/// `predicted − penalty(b) ≥ threshold`, or the largest option if none does.
pub fn min_bits_search(
    predictions: &[QualityPrediction],
    option_bits: &[u8],
    target_success_ratio: f64,
    table: &DegradationTable,
    spec: &OutageSpec,
) -> Result<MinBitsPlan> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if option_bits.is_empty() {
        return Err(Error::Empty("option bits"));
    }
    if option_bits.windows(2).any(|w| w[0] <= w[1]) {
        return Err(invalid("option bits must be strictly descending"));
    }
    if !(0.0..=1.0).contains(&target_success_ratio) {
        return Err(invalid("target success ratio must lie in [0, 1]"));
    }
    for &b in option_bits {
        check_bits(b)?;
    }
    check_unique_ids(predictions)?;
    // Ascending (bits, penalty) pairs.
    let options = option_bits
        .iter()
        .rev()
        .map(|&b| table.penalty(b).map(|p| (b, p)))
        .collect::<Result<Vec<_>>>()?;
    let (max_bits, max_penalty) = options[options.len() - 1];
    let th = spec.threshold_db();
    let mut assignment = BTreeMap::new();
    let mut predicted_ok = 0usize;
    for p in predictions {
        let chosen = options
            .iter()
            .find(|(_, pen)| p.predicted_psnr_db - pen >= th)
            .copied();
        let (bits, ok) = match chosen {
            Some((b, _)) => (b, true),
            None => (max_bits, p.predicted_psnr_db - max_penalty >= th),
        };
        predicted_ok += usize::from(ok);
        assignment.insert(p.source_id, bits);
    }
    let predicted_success_ratio = predicted_ok as f64 / predictions.len() as f64;
    Ok(MinBitsPlan {
        plan: AllocationPlan::new(option_bits.to_vec(), assignment, AllocationPolicy::MinBitsSearch),
        predicted_success_ratio,
        target_met: predicted_success_ratio >= target_success_ratio,
    })
}

/// Fitted codebooks keyed by bit depth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodebookSet {
    books: BTreeMap<u8, CsiCodebook>,
}

impl CodebookSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, codebook: CsiCodebook) {
        self.books.insert(codebook.bits(), codebook);
    }

    pub fn get(&self, bits: u8) -> Result<&CsiCodebook> {
        self.books.get(&bits).ok_or(Error::MissingCodebook(bits))
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        self.books.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CsiCodebook> {
        self.books.values()
    }
}

impl FromIterator<CsiCodebook> for CodebookSet {
    fn from_iter<T: IntoIterator<Item = CsiCodebook>>(iter: T) -> Self {
        let mut set = Self::new();
        for book in iter {
            set.insert(book);
        }
        set
    }
}

fn feedback_for<'a>(codebooks: &'a CodebookSet, bits: Option<u8>) -> Result<CsiFeedback<'a>> {
    Ok(match bits {
        None => CsiFeedback::Perfect,
        Some(b) => CsiFeedback::Quantized(codebooks.get(b)?),
    })
}

/// Mean PSNR loss of `b`-bit feedback against perfect CSI, per option,
/// clamped at zero. Every depth sees the same channels and noise.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_degradation(
    codec: &JsccCodec,
    validation: &[ImageSample],
    option_bits: &[u8],
    codebooks: &CodebookSet,
    env: &LinkEnvironment,
    snr_db: f64,
    realizations: usize,
    seed: u64,
) -> Result<DegradationTable> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if option_bits.is_empty() {
        return Err(Error::Empty("option bits"));
    }
    if realizations == 0 {
        return Err(invalid("need at least one realization"));
    }
    let noise = snr_to_noise_variance(snr_db)?;
    let mut totals = alloc::vec![0.0; option_bits.len()];
    for image in validation {
        let mut rng: SimRng = stream(seed, Purpose::Calibrate, image.source_id());
        for _ in 0..realizations {
            let fork = rng.clone();
            let perfect = psnr_with_feedback(codec, image, env, CsiFeedback::Perfect, &noise, &mut rng)?.0;
            for (slot, &b) in totals.iter_mut().zip(option_bits) {
                let q = psnr_with_feedback(codec, image, env, feedback_for(codebooks, Some(b))?, &noise, &mut fork.clone())?.0;
                *slot += perfect - q;
            }
        }
    }
    let n = (validation.len() * realizations) as f64;
    DegradationTable::new(option_bits.iter().zip(totals).map(|(&b, t)| (b, (t / n).max(0.0))))
}

fn psnr_with_feedback(
    codec: &JsccCodec,
    image: &ImageSample,
    env: &LinkEnvironment,
    feedback: CsiFeedback<'_>,
    noise: &NoiseModel,
    rng: &mut SimRng,
) -> Result<(f64, Option<f64>)> {
    let link = draw_image_link(env, feedback, Some(noise), codec.symbol_count(), rng)?;
    Ok((image_psnr(codec, image, &link.realization)?, link.nmse))
}

pub fn success_ratio(psnrs: &[f64], spec: &OutageSpec) -> Result<f64> {
    if psnrs.is_empty() {
        return Err(Error::Empty("outcomes"));
    }
    let ok = psnrs.iter().filter(|&&p| p >= spec.threshold_db()).count();
    Ok(ok as f64 / psnrs.len() as f64)
}

pub fn outage_probability(psnrs: &[f64], spec: &OutageSpec) -> Result<f64> {
    Ok(1.0 - success_ratio(psnrs, spec)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageOutcome {
    pub source_id: u64,
    /// `None` means perfect CSI.
    pub bits: Option<u8>,
    pub psnr_db: f64,
    pub nmse: Option<f64>,
}

/// Sends one image over its own block-fading link with `bits`-bit feedback.
/// The channel and noise depend only on `(seed, source_id)`, never on the
/// bit depth.
pub fn simulate_image(
    codec: &JsccCodec,
    image: &ImageSample,
    bits: Option<u8>,
    codebooks: &CodebookSet,
    env: &LinkEnvironment,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ImageOutcome> {
    let mut rng = stream(seed, Purpose::Experiment, image.source_id());
    let (psnr_db, nmse) = psnr_with_feedback(codec, image, env, feedback_for(codebooks, bits)?, noise, &mut rng)?;
    Ok(ImageOutcome {
        source_id: image.source_id(),
        bits,
        psnr_db,
        nmse,
    })
}

pub fn simulate_plan(
    codec: &JsccCodec,
    images: &[ImageSample],
    plan: &AllocationPlan,
    codebooks: &CodebookSet,
    env: &LinkEnvironment,
    snr_db: f64,
    seed: u64,
) -> Result<Vec<ImageOutcome>> {
    let noise = snr_to_noise_variance(snr_db)?;
    images
        .iter()
        .map(|image| {
            let bits = plan
                .bits_for(image.source_id())
                .ok_or_else(|| invalid("plan has no assignment for an image"))?;
            simulate_image(codec, image, Some(bits), codebooks, env, &noise, seed)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMetrics {
    pub policy: AllocationPolicy,
    pub option_bits: Vec<u8>,
    pub threshold_db: f64,
    pub success_ratio: f64,
    pub average_bits: f64,
    pub total_bits: u64,
    pub mean_psnr_db: f64,
    /// Mean CSI NMSE per bit depth actually used, ascending in bits.
    pub mean_nmse_by_bits: Vec<(u8, f64)>,
}

pub fn summarize(plan: &AllocationPlan, outcomes: &[ImageOutcome], spec: &OutageSpec) -> Result<ExperimentMetrics> {
    if outcomes.is_empty() {
        return Err(Error::Empty("outcomes"));
    }
    let psnrs: Vec<f64> = outcomes.iter().map(|o| o.psnr_db).collect();
    let mut nmse: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for o in outcomes {
        if let (Some(b), Some(e)) = (o.bits, o.nmse) {
            let slot = nmse.entry(b).or_insert((0.0, 0));
            slot.0 += e;
            slot.1 += 1;
        }
    }
    Ok(ExperimentMetrics {
        policy: plan.policy(),
        option_bits: plan.option_bits().to_vec(),
        threshold_db: spec.threshold_db(),
        success_ratio: success_ratio(&psnrs, spec)?,
        average_bits: plan.average_bits(),
        total_bits: plan.total_bits(),
        mean_psnr_db: psnrs.iter().sum::<f64>() / psnrs.len() as f64,
        mean_nmse_by_bits: nmse.into_iter().map(|(b, (s, n))| (b, s / n as f64)).collect(),
    })
}

/// How bits are assigned in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum AllocationRequest {
    Uniform(u8),
    GroupSplit { high_bits: u8, low_bits: u8 },
    MinBitsSearch {
        option_bits: Vec<u8>,
        target_success_ratio: f64,
        table: DegradationTable,
    },
}

impl AllocationRequest {
    pub fn plan(&self, predictions: &[QualityPrediction], spec: &OutageSpec) -> Result<AllocationPlan> {
        match self {
            AllocationRequest::Uniform(b) => uniform_allocation(predictions, *b),
            AllocationRequest::GroupSplit { high_bits, low_bits } => {
                group_split_allocation(predictions, *high_bits, *low_bits)
            }
            AllocationRequest::MinBitsSearch {
                option_bits,
                target_success_ratio,
                table,
            } => Ok(min_bits_search(predictions, option_bits, *target_success_ratio, table, spec)?.plan),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub plan: AllocationPlan,
    pub outcomes: Vec<ImageOutcome>,
    pub metrics: ExperimentMetrics,
}

/// Predict → allocate → per-image channel, quantized feedback, mismatched
/// precoding, transmission and decoding → aggregate.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptive_experiment(
    codec: &JsccCodec,
    predictions: &[QualityPrediction],
    images: &[ImageSample],
    request: &AllocationRequest,
    codebooks: &CodebookSet,
    env: &LinkEnvironment,
    spec: &OutageSpec,
    snr_db: f64,
    seed: u64,
) -> Result<ExperimentResult> {
    let plan = request.plan(predictions, spec)?;
    let outcomes = simulate_plan(codec, images, &plan, codebooks, env, snr_db, seed)?;
    let metrics = summarize(&plan, &outcomes, spec)?;
    Ok(ExperimentResult {
        plan,
        outcomes,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn preds(values: &[f64]) -> Vec<QualityPrediction> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| QualityPrediction::new(i as u64, v))
            .collect()
    }

    #[test]
    fn group_split_orders_by_prediction() {
        let plan = group_split_allocation(&preds(&[20.0, 30.0]), 7, 5).unwrap();
        assert_eq!(plan.bits_for(1), Some(5));
        assert_eq!(plan.bits_for(0), Some(7));
        assert_eq!(plan.average_bits(), 6.0);
    }

    #[test]
    fn group_split_thousand_images_averages_six() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 10.0).collect();
        let plan = group_split_allocation(&preds(&values), 7, 5).unwrap();
        assert_eq!(plan.average_bits(), 6.0);
        assert_eq!(plan.total_bits(), 6000);
    }

    #[test]
    fn group_split_ties_and_odd_counts() {
        let plan = group_split_allocation(&preds(&[25.0; 5]), 7, 5).unwrap();
        let bits: Vec<u8> = (0..5).map(|i| plan.bits_for(i).unwrap()).collect();
        assert_eq!(bits, vec![5, 5, 7, 7, 7]);
        assert!(group_split_allocation(&[], 7, 5).is_err());
        assert!(group_split_allocation(&preds(&[1.0]), 5, 7).is_err());
    }

    fn table() -> DegradationTable {
        DegradationTable::new([(7, 0.05), (6, 0.2), (5, 0.6)]).unwrap()
    }

    #[test]
    fn min_bits_single_option_and_slack() {
        let spec = OutageSpec::new(20.0).unwrap();
        let p = preds(&[10.0, 25.0, 40.0]);
        let single = min_bits_search(&p, &[7], 0.9, &table(), &spec).unwrap();
        assert_eq!(single.plan.total_bits(), 21);
        let slack = min_bits_search(&preds(&[50.0, 60.0]), &[7, 6, 5], 0.9, &table(), &spec).unwrap();
        assert_eq!(slack.plan.total_bits(), 10);
        assert!(slack.target_met);
    }

    #[test]
    fn min_bits_picks_smallest_qualifying() {
        let spec = OutageSpec::new(20.0).unwrap();
        let p = preds(&[20.1, 20.3, 20.7, 19.0]);
        let out = min_bits_search(&p, &[7, 6, 5], 0.0, &table(), &spec).unwrap();
        let bits: Vec<u8> = (0..4).map(|i| out.plan.bits_for(i).unwrap()).collect();
        assert_eq!(bits, vec![7, 6, 5, 7]);
        assert_eq!(out.predicted_success_ratio, 0.75);
    }

    #[test]
    fn min_bits_rejects_bad_inputs() {
        let spec = OutageSpec::new(20.0).unwrap();
        let p = preds(&[21.0]);
        assert!(matches!(
            min_bits_search(&p, &[8, 7], 0.5, &table(), &spec),
            Err(Error::MalformedTable(_))
        ));
        assert!(min_bits_search(&p, &[5, 7], 0.5, &table(), &spec).is_err());
        assert!(min_bits_search(&p, &[7], 1.5, &table(), &spec).is_err());
        assert!(DegradationTable::new([(5, -0.1)]).is_err());
        assert!(DegradationTable::new([(5, f64::NAN)]).is_err());
        assert!(DegradationTable::new([(5, 0.1), (5, 0.2)]).is_err());
    }

    #[test]
    fn success_ratio_counting() {
        let psnrs = [30.0, 25.0, 21.0, 19.0];
        assert_eq!(success_ratio(&psnrs, &OutageSpec::new(20.0).unwrap()).unwrap(), 0.75);
        assert_eq!(success_ratio(&psnrs, &OutageSpec::new(10.0).unwrap()).unwrap(), 1.0);
        assert_eq!(success_ratio(&psnrs, &OutageSpec::new(f64::INFINITY).unwrap()).unwrap(), 0.0);
        assert!((outage_probability(&psnrs, &OutageSpec::new(20.0).unwrap()).unwrap() - 0.25).abs() < 1e-15);
        assert!(success_ratio(&[], &OutageSpec::new(0.0).unwrap()).is_err());
        assert!(OutageSpec::new(f64::NAN).is_err());
    }
}
