use crate::autodiff::{NodeId, Tape, Tensor};
use crate::decoder::{loss_augmented_decode, Decoded, HammingCost};
use crate::scorer::{span_index, ScoreChart, ScorerError};
use crate::treebank::SpanSet;

use super::TrainError;

/// A recorded margin loss and the loss-augmented prediction behind it.
#[derive(Debug)]
pub struct MarginLoss {
    pub node: NodeId,
    pub value: f64,
    pub predicted: Decoded,
}

/// `max(0, s(T') + cost(T') - s(T*))` where `T'` is the loss-augmented argmax.
///
/// `scores` is the `(num_spans, L)` node the chart was read from; the loss is
/// recorded as `relu(sum(scores * C) + cost)` with `C` the difference of the
/// two trees' cell indicators, so gradients reach exactly the cells of `T'`
/// (with +1) and `T*` (with -1).
pub fn margin_loss(tape: &mut Tape, scores: NodeId, chart: &ScoreChart, gold: &SpanSet) -> Result<MarginLoss, TrainError> {
    let n = chart.len();
    if gold.length != n {
        return Err(TrainError::LengthMismatch { chart: n, gold: gold.length });
    }
    let predicted = loss_augmented_decode(chart, gold)?;
    let cost = HammingCost::new(chart, gold)?.tree_cost(&predicted);
    let labels = chart.num_labels();
    let mut indicator = Tensor::zeros(&[n * (n + 1) / 2, labels]);
    {
        let data = indicator.data_mut();
        for &(i, j, l) in predicted.spans.iter().filter(|s| s.2 != 0) {
            data[span_index(n, i, j) * labels + l] += 1.0;
        }
        for s in &gold.spans {
            if s.label.is_empty_marker() {
                continue;
            }
            let l = chart
                .vocab()
                .index_of(&s.label)
                .ok_or_else(|| ScorerError::UnknownLabel(s.label.to_string()))?;
            data[span_index(n, s.start, s.end) * labels + l] -= 1.0;
        }
    }
    let c = tape.constant(indicator);
    let diff = tape.mul(scores, c)?;
    let diff = tape.sum(diff);
    let shifted = tape.shift(diff, cost);
    let node = tape.relu(shifted);
    // relu would hide a NaN margin
    let raw = tape.value(shifted).item();
    let value = if raw.is_finite() { tape.value(node).item() } else { raw };
    Ok(MarginLoss { node, value, predicted })
}
