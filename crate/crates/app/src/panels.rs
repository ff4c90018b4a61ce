//! The explanation panel set. The CLI and the HTTP service both call
//! [`render_panels`], so equal inputs give equal bytes on either path.

use std::path::{Path, PathBuf};

use octx_core::gradcam::{gradcam, render_heatmap, Heatmap, HEATMAP_ALPHA};
use octx_core::lime::{explain, render_overlay, Baseline, LimeOutput, LimeParams, OverlayMode, SegmentMode};
use octx_core::render::{encode_png, tensor_to_rgb};
use octx_core::{Class, OctNet, Result, Tensor, NUM_CLASSES};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lime,
    Gradcam,
    /// Both, as the full five-panel strip.
    #[default]
    All,
}

impl Method {
    fn lime(self) -> bool {
        matches!(self, Method::Lime | Method::All)
    }

    fn gradcam(self) -> bool {
        matches!(self, Method::Gradcam | Method::All)
    }
}

/// User-facing explanation knobs. Grad-CAM ignores all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainParams {
    pub samples: usize,
    pub top_labels: usize,
    /// Segments in the boundary and positive-only panels.
    pub features: usize,
    /// Segments in the positive/negative panel.
    pub posneg_features: usize,
    pub seed: u64,
}

impl Default for ExplainParams {
    fn default() -> Self {
        Self {
            samples: 100,
            top_labels: 5,
            features: 5,
            posneg_features: 10,
            seed: 0,
        }
    }
}

impl ExplainParams {
    pub fn lime_params(&self) -> LimeParams {
        LimeParams {
            num_samples: self.samples,
            top_labels: self.top_labels,
            num_features: self.features,
            seed: self.seed,
            baseline: Baseline::SegmentMean,
            segmentation: SegmentMode::Grid,
            ..LimeParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Panel {
    pub name: &'static str,
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSet {
    pub panels: Vec<Panel>,
    /// Pretty-printed JSON written as `explanation.json`.
    pub data: Vec<u8>,
}

pub const DATA_FILE: &str = "explanation.json";

impl PanelSet {
    pub fn panel(&self, name: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.name == name)
    }

    pub fn write_to(&self, dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for p in &self.panels {
            let path = dir.join(p.name);
            std::fs::write(&path, &p.png)?;
            written.push(path);
        }
        let path = dir.join(DATA_FILE);
        std::fs::write(&path, &self.data)?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Serialize)]
struct PredictionData {
    label: Class,
    probs: [f32; NUM_CLASSES],
}

#[derive(Serialize)]
struct GradcamData<'a> {
    target: Class,
    empty: bool,
    alphas: &'a [f64],
    raw_height: usize,
    raw_width: usize,
    raw: &'a [f64],
}

impl<'a> From<&'a Heatmap> for GradcamData<'a> {
    fn from(h: &'a Heatmap) -> Self {
        Self {
            target: h.target,
            empty: h.empty,
            alphas: &h.alphas,
            raw_height: h.raw_height,
            raw_width: h.raw_width,
            raw: &h.raw,
        }
    }
}

#[derive(Serialize)]
struct Data<'a> {
    method: Method,
    prediction: PredictionData,
    /// Absent for Grad-CAM alone, which takes no parameters.
    params: Option<&'a ExplainParams>,
    lime: Option<&'a LimeOutput>,
    gradcam: Option<GradcamData<'a>>,
}

/// Renders the panels for the predicted class of `image`:
///
/// - `original.png`
/// - `lime_boundaries.png`: outlines of the `features` strongest segments
/// - `lime_positive.png`: green tint on those with positive weight
/// - `lime_posneg.png`: green/red over the `posneg_features` strongest
/// - `gradcam.png`
pub fn render_panels(net: &OctNet, image: &Tensor<f32>, method: Method, params: &ExplainParams) -> Result<PanelSet> {
    let prediction = net.predict(image)?;
    let mut panels = vec![Panel {
        name: "original.png",
        png: encode_png(&tensor_to_rgb(image)?)?,
    }];

    let lime = if method.lime() {
        let out = explain(net, image, &params.lime_params())?;
        let exp = out
            .explanations
            .iter()
            .find(|e| e.target == prediction.label)
            .expect("predicted class ranks first");
        let posneg = exp.with_features(params.posneg_features);
        for (name, e, mode) in [
            ("lime_boundaries.png", exp, OverlayMode::Boundaries),
            ("lime_positive.png", exp, OverlayMode::PositiveOnly),
            ("lime_posneg.png", &posneg, OverlayMode::PosNeg),
        ] {
            let png = encode_png(&render_overlay(image, &out.segments, e, mode)?)?;
            panels.push(Panel { name, png });
        }
        Some(out)
    } else {
        None
    };

    let heatmap = if method.gradcam() {
        let h = gradcam(net, image, prediction.label)?;
        panels.push(Panel {
            name: "gradcam.png",
            png: encode_png(&render_heatmap(image, &h, HEATMAP_ALPHA)?)?,
        });
        Some(h)
    } else {
        None
    };

    let data = Data {
        method,
        prediction: PredictionData {
            label: prediction.label,
            probs: prediction.probs,
        },
        params: method.lime().then_some(params),
        lime: lime.as_ref(),
        gradcam: heatmap.as_ref().map(GradcamData::from),
    };
    let mut bytes = serde_json::to_vec_pretty(&data).expect("serialisable");
    bytes.push(b'\n');
    Ok(PanelSet { panels, data: bytes })
}
