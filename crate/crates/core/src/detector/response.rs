use serde::{Deserialize, Serialize};

use super::{ResponseMode, Verdict};
use crate::data::argmax;

/// What the prediction API returns to the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Response {
    Prediction {
        probabilities: Vec<f64>,
        label: usize,
        alarm: bool,
    },
    Denied,
}

impl Response {
    pub fn label(&self) -> Option<usize> {
        match self {
            Response::Prediction { label, .. } => Some(*label),
            Response::Denied => None,
        }
    }
}

/// Applies the post-detection policy to the model's prediction.
///
/// `Deceive` swaps the two most likely classes once the client has been
/// flagged, so the reported label is the runner-up.
pub fn respond(verdict: &Verdict, prediction: &[f64], mode: ResponseMode) -> Response {
    let alarm = verdict.alarmed;
    match mode {
        ResponseMode::Block if alarm => Response::Denied,
        ResponseMode::Deceive if alarm && prediction.len() >= 2 => {
            let mut order: Vec<usize> = (0..prediction.len()).collect();
            order.sort_by(|&a, &b| prediction[b].total_cmp(&prediction[a]).then(a.cmp(&b)));
            let mut probabilities = prediction.to_vec();
            probabilities.swap(order[0], order[1]);
            Response::Prediction {
                probabilities,
                label: order[1],
                alarm,
            }
        }
        _ => Response::Prediction {
            probabilities: prediction.to_vec(),
            label: argmax(prediction),
            alarm,
        },
    }
}
