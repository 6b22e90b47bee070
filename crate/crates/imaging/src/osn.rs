//! Simulated social-network upload pipelines.
//!
//! The built-in profiles are placeholders chosen to resemble typical
//! platform behaviour (downscale, optional sharpening, re-encode); they are
//! not measurements of any real service.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{jpeg, resize_bilinear, sharpen, Error, ImageRgb8, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResizeRule {
    /// Downscale so that the longer side is at most `max_side`; never upscales.
    MaxSide { max_side: usize },
    /// Multiply both sides by `scale`.
    Scale { scale: f64 },
}

impl ResizeRule {
    pub fn target(&self, h: usize, w: usize) -> (usize, usize) {
        match *self {
            ResizeRule::MaxSide { max_side } => {
                let long = h.max(w);
                if long <= max_side {
                    (h, w)
                } else {
                    let s = max_side as f64 / long as f64;
                    (scaled(h, s), scaled(w, s))
                }
            }
            ResizeRule::Scale { scale } => (scaled(h, scale), scaled(w, scale)),
        }
    }
}

fn scaled(n: usize, s: f64) -> usize {
    ((n as f64 * s).round() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsnStep {
    Resize(ResizeRule),
    Sharpen { strength: f32 },
    Jpeg { quality: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OsnProfile {
    pub name: String,
    pub steps: Vec<OsnStep>,
}

impl OsnProfile {
    pub fn new(name: impl Into<String>, steps: Vec<OsnStep>) -> Result<Self> {
        let p = Self {
            name: name.into(),
            steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidProfile(format!("{}: no steps", self.name)));
        }
        for step in &self.steps {
            match *step {
                OsnStep::Jpeg { quality } if !(1..=100).contains(&quality) => {
                    return Err(Error::InvalidProfile(format!(
                        "{}: jpeg quality {quality} outside 1..=100",
                        self.name
                    )))
                }
                OsnStep::Sharpen { strength } if !(strength >= 0.0 && strength.is_finite()) => {
                    return Err(Error::InvalidProfile(format!(
                        "{}: sharpen strength must be finite and >= 0",
                        self.name
                    )))
                }
                OsnStep::Resize(ResizeRule::Scale { scale }) if !(scale > 0.0 && scale.is_finite()) => {
                    return Err(Error::InvalidProfile(format!("{}: scale must be > 0", self.name)))
                }
                OsnStep::Resize(ResizeRule::MaxSide { max_side: 0 }) => {
                    return Err(Error::InvalidProfile(format!("{}: max_side must be > 0", self.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Option<Self> {
        use OsnStep::*;
        let steps = match name {
            "facebook-like" => vec![
                Resize(ResizeRule::MaxSide { max_side: 960 }),
                Jpeg { quality: 72 },
            ],
            "whatsapp-like" => vec![
                Resize(ResizeRule::Scale { scale: 0.7 }),
                Sharpen { strength: 0.5 },
                Jpeg { quality: 75 },
            ],
            "weibo-like" => vec![Jpeg { quality: 80 }],
            "wechat-like" => vec![
                Resize(ResizeRule::MaxSide { max_side: 1080 }),
                Jpeg { quality: 70 },
            ],
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            steps,
        })
    }

    pub fn builtin_names() -> [&'static str; 4] {
        ["facebook-like", "whatsapp-like", "weibo-like", "wechat-like"]
    }

    /// Parses a profile file: a JSON list of steps. The profile takes the
    /// file stem as its name.
    pub fn from_json(name: &str, json: &str) -> Result<Self> {
        let steps: Vec<OsnStep> = serde_json::from_str(json)?;
        Self::new(name, steps)
    }

    /// Resolves a built-in name or a path to a profile file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(p) = Self::builtin(spec) {
            return Ok(p);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        Self::from_json(&name, &text)
    }

    /// Output dimensions for an input of `(h, w)`.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        self.steps.iter().fold((h, w), |(h, w), step| match step {
            OsnStep::Resize(rule) => rule.target(h, w),
            _ => (h, w),
        })
    }
}

/// Applies every step of `profile` in order.
pub fn degrade(img: &ImageRgb8, profile: &OsnProfile) -> Result<ImageRgb8> {
    profile.validate()?;
    let mut cur = img.clone();
    for step in &profile.steps {
        cur = match *step {
            OsnStep::Resize(rule) => {
                let (h, w) = rule.target(cur.height(), cur.width());
                resize_bilinear(&cur, h, w)?
            }
            OsnStep::Sharpen { strength } => sharpen(&cur, strength),
            OsnStep::Jpeg { quality } => jpeg::decode(&jpeg::encode(&cur, quality)?)?,
        };
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_json_round_trip() {
        let p = OsnProfile::builtin("whatsapp-like").unwrap();
        let json = serde_json::to_string(&p.steps).unwrap();
        assert_eq!(
            json,
            r#"[{"resize":{"scale":0.7}},{"sharpen":{"strength":0.5}},{"jpeg":{"quality":75}}]"#
        );
        assert_eq!(OsnProfile::from_json("whatsapp-like", &json).unwrap(), p);
        let fb = serde_json::to_string(&OsnProfile::builtin("facebook-like").unwrap().steps).unwrap();
        assert_eq!(fb, r#"[{"resize":{"max_side":960}},{"jpeg":{"quality":72}}]"#);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(OsnProfile::new("empty", vec![]).is_err());
        assert!(OsnProfile::new("q0", vec![OsnStep::Jpeg { quality: 0 }]).is_err());
        assert!(OsnProfile::new("q101", vec![OsnStep::Jpeg { quality: 101 }]).is_err());
        assert!(OsnProfile::new("neg", vec![OsnStep::Sharpen { strength: -1.0 }]).is_err());
        assert!(OsnProfile::from_json("x", "[]").is_err());
    }

    #[test]
    fn max_side_never_upscales() {
        let r = ResizeRule::MaxSide { max_side: 960 };
        assert_eq!(r.target(500, 700), (500, 700));
        assert_eq!(r.target(1920, 1080), (960, 540));
    }

    #[test]
    fn whatsapp_scales_dims() {
        let img = ImageRgb8::from_fn(100, 60, |y, x| [(y * 2) as u8, (x * 3) as u8, 50]).unwrap();
        let p = OsnProfile::builtin("whatsapp-like").unwrap();
        let out = degrade(&img, &p).unwrap();
        assert_eq!(out.dims(), (70, 42));
        assert_eq!(p.output_dims(100, 60), (70, 42));
    }

    #[test]
    fn scale_one_profile_keeps_dims() {
        let img = ImageRgb8::from_fn(33, 17, |y, x| [(y * 5) as u8, (x * 9) as u8, 1]).unwrap();
        let p = OsnProfile::new(
            "unit",
            vec![
                OsnStep::Resize(ResizeRule::Scale { scale: 1.0 }),
                OsnStep::Sharpen { strength: 0.3 },
                OsnStep::Jpeg { quality: 60 },
            ],
        )
        .unwrap();
        let once = degrade(&img, &p).unwrap();
        let twice = degrade(&once, &p).unwrap();
        assert_eq!(once.dims(), img.dims());
        assert_eq!(twice.dims(), img.dims());
    }
}
