#![allow(dead_code)]

use ctxbound::dataset::{Category, ImageInfo};
use ctxbound::{BoundingBox, CategoryId, DatasetBundle, Detection, GroundTruthObject};
use proptest::prelude::*;

pub fn int_box() -> impl Strategy<Value = BoundingBox> {
    (0i32..200, 0i32..200, 1i32..80, 1i32..80)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x as f64, y as f64, w as f64, h as f64))
}

/// Small bundles over 3 images and 3 categories with integer boxes.
/// Detection boxes are often jittered copies of objects so that every
/// outcome type shows up.
pub fn bundle() -> impl Strategy<Value = DatasetBundle> {
    let object = (1u64..=3, 1u64..=3, int_box());
    let det = (
        1u64..=3,
        1u64..=3,
        int_box(),
        0usize..64,
        -6i32..=6,
        -6i32..=6,
        0u32..1000,
    );
    (
        prop::collection::vec(object, 0..10),
        prop::collection::vec(det, 0..16),
    )
        .prop_map(|(objs, dets)| {
            let objects: Vec<GroundTruthObject> = objs
                .into_iter()
                .enumerate()
                .map(|(i, (image_id, cat, bbox))| GroundTruthObject {
                    id: i as u64 + 1,
                    image_id,
                    category: CategoryId(cat),
                    bbox,
                })
                .collect();
            let detections = dets
                .into_iter()
                .map(|(image_id, cat, free, pick, dx, dy, conf)| {
                    let (image_id, bbox) = if objects.is_empty() || pick >= 2 * objects.len() {
                        (image_id, free)
                    } else {
                        let o = &objects[pick % objects.len()];
                        (o.image_id, o.bbox.translated(dx as f64, dy as f64))
                    };
                    Detection {
                        image_id,
                        category: CategoryId(cat),
                        bbox,
                        confidence: conf as f64 / 1000.0,
                    }
                })
                .collect();
            DatasetBundle {
                images: (1..=3)
                    .map(|id| ImageInfo {
                        id,
                        width: 300.0,
                        height: 300.0,
                    })
                    .collect(),
                categories: ["a", "b", "c"]
                    .iter()
                    .enumerate()
                    .map(|(i, n)| Category {
                        id: CategoryId(i as u64 + 1),
                        name: n.to_string(),
                    })
                    .collect(),
                objects,
                detections,
            }
        })
}
