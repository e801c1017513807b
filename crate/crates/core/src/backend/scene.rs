use std::io::{Read, Write};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, RleMask};

/// COCO area split: small below 32², medium below 96², large otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const SMALL_MAX: u64 = 32 * 32;
    pub const MEDIUM_MAX: u64 = 96 * 96;

    pub fn of_area(area: u64) -> Self {
        if area < Self::SMALL_MAX {
            SizeClass::Small
        } else if area < Self::MEDIUM_MAX {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mask: BinaryMask,
    pub category_id: i64,
}

impl Instance {
    pub fn size_class(&self) -> SizeClass {
        SizeClass::of_area(self.mask.area())
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("instance {index} is {got_w}x{got_h}, scene is {width}x{height}")]
    InstanceShape {
        index: usize,
        got_w: u32,
        got_h: u32,
        width: u32,
        height: u32,
    },
    #[error("scene dimensions must be positive")]
    EmptyScene,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground-truth record for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// Path or identifier handed to external backends; defaults to `image_id`.
    pub file_name: Option<String>,
    pub instances: Vec<Instance>,
}

impl SceneAnnotation {
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        instances: Vec<Instance>,
    ) -> Result<Self, SceneError> {
        let scene = Self {
            image_id: image_id.into(),
            width,
            height,
            file_name: None,
            instances,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::EmptyScene);
        }
        for (index, inst) in self.instances.iter().enumerate() {
            if inst.mask.width() != self.width || inst.mask.height() != self.height {
                return Err(SceneError::InstanceShape {
                    index,
                    got_w: inst.mask.width(),
                    got_h: inst.mask.height(),
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }

    pub fn image_ref(&self) -> ImageRef {
        ImageRef {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            source: self
                .file_name
                .clone()
                .unwrap_or_else(|| self.image_id.clone()),
        }
    }

    /// Union of all instance masks.
    pub fn foreground(&self) -> BinaryMask {
        let mut fg = BinaryMask::new(self.width, self.height).expect("validated dimensions");
        for inst in &self.instances {
            fg.union_into(&inst.mask).expect("validated instance shape");
        }
        fg
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, SceneError> {
        let scene: SceneAnnotation = serde_json::from_reader(reader)?;
        Ok(scene)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<(), SceneError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }
}

/// What the pipeline needs to know about an image without touching pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// Sent verbatim to external backends.
    pub source: String,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    category_id: i64,
    rle: RleMask,
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    #[serde(deserialize_with = "string_or_int")]
    image_id: String,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
    instances: Vec<InstanceJson>,
}

/// COCO uses integer image ids; fixtures may use strings. Both are kept as text.
pub(crate) fn string_or_int<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        I(i64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::I(i) => i.to_string(),
    })
}

impl Serialize for SceneAnnotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SceneJson {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            file_name: self.file_name.clone(),
            instances: self
                .instances
                .iter()
                .map(|i| InstanceJson {
                    category_id: i.category_id,
                    rle: RleMask::encode(&i.mask),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SceneAnnotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = SceneJson::deserialize(d)?;
        let scene = SceneAnnotation {
            image_id: raw.image_id,
            width: raw.width,
            height: raw.height,
            file_name: raw.file_name,
            instances: raw
                .instances
                .into_iter()
                .map(|i| Instance {
                    mask: i.rle.decode(),
                    category_id: i.category_id,
                })
                .collect(),
        };
        scene.validate().map_err(de::Error::custom)?;
        Ok(scene)
    }
}
