use std::path::Path;

use super::{Detection, GroundTruthBox};
use crate::detect::parse_detection_fields;
use crate::error::{Error, Result};
use crate::labels::ClassNames;

/// `<image_id> <class_id> <x1> <y1> <x2> <y2> <difficult:0|1>` lines. Blank lines and `#`
/// comments are skipped; the class may also be given by name.
pub fn parse_ground_truth(text: &str, names: &ClassNames) -> Result<Vec<GroundTruthBox>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad =
            |msg: String| Error::format("ground-truth line", format!("line {}: {msg}", n + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        let [image, class, x1, y1, x2, y2, difficult] = f[..] else {
            return Err(bad(format!("expected 7 fields, got {}", f.len())));
        };
        let class_id = names
            .lookup(class)
            .ok_or_else(|| bad(format!("unknown class `{class}`")))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad number `{s}`")))
        };
        let difficult = match difficult {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("difficult flag must be 0 or 1, got `{other}`"))),
        };
        let g = GroundTruthBox {
            image_id: image.to_string(),
            class_id,
            x1: num(x1)?,
            y1: num(y1)?,
            x2: num(x2)?,
            y2: num(y2)?,
            difficult,
        };
        if g.x1 > g.x2 || g.y1 > g.y2 {
            return Err(bad("box corners out of order".into()));
        }
        out.push(g);
    }
    Ok(out)
}

pub fn format_ground_truth(gts: &[GroundTruthBox]) -> String {
    gts.iter()
        .map(|g| {
            format!(
                "{} {} {} {} {} {} {}\n",
                g.image_id,
                g.class_id,
                g.x1,
                g.y1,
                g.x2,
                g.y2,
                u8::from(g.difficult)
            )
        })
        .collect()
}

pub fn load_ground_truth(
    path: impl AsRef<Path>,
    names: &ClassNames,
) -> Result<Vec<GroundTruthBox>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text, names)
}

/// Detection lines. With `image_id` set, lines carry no image column (per-image files);
/// otherwise each line starts with its image id.
pub fn parse_detections(
    text: &str,
    image_id: Option<&str>,
    names: &ClassNames,
) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (img, rest) = match image_id {
            Some(id) => (id, &fields[..]),
            None => match fields.split_first() {
                Some((id, rest)) => (*id, rest),
                None => continue,
            },
        };
        let b = parse_detection_fields(rest, names)?;
        out.push(Detection::from_box(img, &b));
    }
    Ok(out)
}

/// A single file of image-prefixed lines, or a directory of `<image_id>.txt` files.
pub fn load_detections(path: impl AsRef<Path>, names: &ClassNames) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            let id = f
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| {
                    Error::format("detection file", format!("bad name {}", f.display()))
                })?
                .to_string();
            let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
            out.extend(parse_detections(&text, Some(&id), names)?);
        }
        Ok(out)
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_detections(&text, None, names)
    }
}

/// Objects of one VOC annotation file. Missing `<difficult>` counts as 0.
pub fn parse_voc_xml(xml: &str, image_id: &str, names: &ClassNames) -> Result<Vec<GroundTruthBox>> {
    let doc =
        roxmltree::Document::parse(xml).map_err(|e| Error::format("VOC XML", e.to_string()))?;
    let child_text = |node: roxmltree::Node, tag: &str| -> Option<String> {
        node.children()
            .find(|c| c.has_tag_name(tag))
            .and_then(|c| c.text())
            .map(|t| t.trim().to_string())
    };
    let mut out = Vec::new();
    for obj in doc.descendants().filter(|n| n.has_tag_name("object")) {
        let name = child_text(obj, "name")
            .ok_or_else(|| Error::format("VOC XML", "object without <name>"))?;
        let class_id = names
            .lookup(&name)
            .ok_or_else(|| Error::format("VOC XML", format!("unknown class `{name}`")))?;
        let difficult = child_text(obj, "difficult").is_some_and(|d| d == "1");
        let bb = obj
            .children()
            .find(|c| c.has_tag_name("bndbox"))
            .ok_or_else(|| Error::format("VOC XML", "object without <bndbox>"))?;
        let coord = |tag: &str| -> Result<f64> {
            child_text(bb, tag)
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| Error::format("VOC XML", format!("missing or bad <{tag}>")))
        };
        out.push(GroundTruthBox {
            image_id: image_id.to_string(),
            class_id,
            x1: coord("xmin")?,
            y1: coord("ymin")?,
            x2: coord("xmax")?,
            y2: coord("ymax")?,
            difficult,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const XML: &str = r#"<annotation>
  <filename>000005.jpg</filename>
  <size><width>500</width><height>375</height><depth>3</depth></size>
  <object>
    <name>chair</name><pose>Rear</pose><truncated>0</truncated><difficult>0</difficult>
    <bndbox><xmin>263</xmin><ymin>211</ymin><xmax>324</xmax><ymax>339</ymax></bndbox>
  </object>
  <object>
    <name>dog</name><difficult>1</difficult>
    <bndbox><xmin>5</xmin><ymin>6.5</ymin><xmax>70</xmax><ymax>80</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn voc_xml_objects() {
        let g = parse_voc_xml(XML, "000005", &ClassNames::voc()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].class_id, 8);
        assert_eq!(
            (g[0].x1, g[0].y1, g[0].x2, g[0].y2),
            (263.0, 211.0, 324.0, 339.0)
        );
        assert!(!g[0].difficult);
        assert_eq!(g[1].class_id, 11);
        assert!(g[1].difficult);
        assert_eq!(g[1].y1, 6.5);
        assert!(parse_voc_xml(XML, "x", &ClassNames::ids_only()).is_err());
        assert!(parse_voc_xml("<annotation>", "x", &ClassNames::voc()).is_err());
    }

    #[test]
    fn ground_truth_round_trip_and_errors() {
        let g = parse_voc_xml(XML, "000005", &ClassNames::voc()).unwrap();
        let text = format_ground_truth(&g);
        assert_eq!(text.lines().next().unwrap(), "000005 8 263 211 324 339 0");
        assert_eq!(
            parse_ground_truth(&text, &ClassNames::ids_only()).unwrap(),
            g
        );
        let names = ClassNames::voc();
        assert!(parse_ground_truth("img 0 1 2 3", &names).is_err());
        assert!(parse_ground_truth("img 0 1 2 3 4 2", &names).is_err());
        assert!(parse_ground_truth("img 0 5 2 3 4 0", &names).is_err());
        assert_eq!(
            parse_ground_truth("# c\n\nimg dog 1 2 3 4 1\n", &names).unwrap()[0].class_id,
            11
        );
    }

    #[test]
    fn detections_with_and_without_prefix() {
        let names = ClassNames::voc();
        let a = parse_detections("img1 dog 0.5 1 2 3 4\n", None, &names).unwrap();
        let b = parse_detections("dog 0.5 1 2 3 4\n", Some("img1"), &names).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].image_id, "img1");
        assert!(parse_detections("dog 0.5 1 2 3 4\n", None, &names).is_err());
    }
}
