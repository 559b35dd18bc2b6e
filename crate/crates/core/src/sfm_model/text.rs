//! COLMAP text model format.
//!
//! `#`-prefixed and blank lines are comments, except the observation line that follows
//! each image header in `images.txt`, which may legitimately be empty.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::Vector3;

use super::{
    CameraId, CameraIntrinsics, CameraModel, ImageId, Observation, Point3D, Point3dId, Pose,
    PoseConvention, RegisteredImage, SfmError, TrackElement,
};

fn is_comment(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn malformed(line: usize, reason: impl Into<String>) -> SfmError {
    SfmError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn field<T: FromStr>(token: &str, what: &str, line: usize) -> Result<T, SfmError> {
    token
        .parse()
        .map_err(|_| malformed(line, format!("cannot parse {what} from {token:?}")))
}

fn finite(token: &str, what: &str, line: usize) -> Result<f64, SfmError> {
    let v: f64 = field(token, what, line)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(malformed(line, format!("{what} is not finite: {token:?}")))
    }
}

fn point_ref(token: &str, line: usize) -> Result<Option<Point3dId>, SfmError> {
    if token == "-1" {
        Ok(None)
    } else {
        field(token, "POINT3D_ID", line).map(Some)
    }
}

/// Parses `cameras.txt`: `CAMERA_ID MODEL WIDTH HEIGHT PARAMS...`.
pub fn parse_cameras<R: BufRead>(reader: R) -> Result<BTreeMap<CameraId, CameraIntrinsics>, SfmError> {
    let mut cameras = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if is_comment(&line) {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 4 {
            return Err(malformed(lineno, format!("expected at least 4 fields, found {}", tokens.len())));
        }
        let camera_id: CameraId = field(tokens[0], "CAMERA_ID", lineno)?;
        let model = match tokens[1] {
            "PINHOLE" => CameraModel::Pinhole,
            "SIMPLE_PINHOLE" => CameraModel::SimplePinhole,
            other => {
                return Err(SfmError::UnsupportedCameraModel {
                    line: lineno,
                    model: other.to_string(),
                })
            }
        };
        let width: u32 = field(tokens[2], "WIDTH", lineno)?;
        let height: u32 = field(tokens[3], "HEIGHT", lineno)?;
        let params = tokens[4..]
            .iter()
            .map(|t| finite(t, "camera parameter", lineno))
            .collect::<Result<Vec<_>, _>>()?;
        let cam = match (model, params.as_slice()) {
            (CameraModel::Pinhole, &[fx, fy, cx, cy]) => {
                CameraIntrinsics::pinhole(camera_id, width, height, fx, fy, cx, cy)?
            }
            (CameraModel::SimplePinhole, &[f, cx, cy]) => {
                CameraIntrinsics::simple_pinhole(camera_id, width, height, f, cx, cy)?
            }
            _ => {
                return Err(malformed(
                    lineno,
                    format!("{} takes {} parameters, found {}", model.name(), match model {
                        CameraModel::Pinhole => 4,
                        CameraModel::SimplePinhole => 3,
                    }, params.len()),
                ))
            }
        };
        if cameras.insert(camera_id, cam).is_some() {
            return Err(SfmError::DuplicateId {
                line: lineno,
                kind: "camera",
                id: camera_id as u64,
            });
        }
    }
    Ok(cameras)
}

/// Parses `images.txt`: a header line `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME`
/// followed by a line of `X Y POINT3D_ID` triples.
pub fn parse_images<R: BufRead>(reader: R) -> Result<BTreeMap<ImageId, RegisteredImage>, SfmError> {
    let mut images = BTreeMap::new();
    let mut lines = reader.lines().enumerate();
    while let Some((idx, line)) = lines.next() {
        let line = line?;
        let lineno = idx + 1;
        if is_comment(&line) {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 10 {
            return Err(malformed(lineno, format!("image header needs 10 fields, found {}", tokens.len())));
        }
        let image_id: ImageId = field(tokens[0], "IMAGE_ID", lineno)?;
        let mut q = [0.0; 4];
        for (slot, tok) in q.iter_mut().zip(&tokens[1..5]) {
            *slot = finite(tok, "quaternion component", lineno)?;
        }
        let mut t = [0.0; 3];
        for (slot, tok) in t.iter_mut().zip(&tokens[5..8]) {
            *slot = finite(tok, "translation component", lineno)?;
        }
        let camera_id: CameraId = field(tokens[8], "CAMERA_ID", lineno)?;
        let name = tokens[9..].join(" ");
        let pose = Pose::from_wxyz(q, Vector3::from(t), PoseConvention::WorldToCamera)
            .map_err(|source| SfmError::InvalidQuaternion { line: lineno, source })?;

        // The observation line is mandatory in COLMAP output but tolerated as missing at EOF.
        let observations = match lines.next() {
            None => Vec::new(),
            Some((oidx, obs_line)) => parse_observations(&obs_line?, oidx + 1)?,
        };
        let image = RegisteredImage {
            image_id,
            name,
            pose,
            camera_id,
            observations,
        };
        if images.insert(image_id, image).is_some() {
            return Err(SfmError::DuplicateId {
                line: lineno,
                kind: "image",
                id: image_id as u64,
            });
        }
    }
    Ok(images)
}

fn parse_observations(line: &str, lineno: usize) -> Result<Vec<Observation>, SfmError> {
    if line.trim_start().starts_with('#') {
        return Err(malformed(lineno, "expected an observation line after the image header"));
    }
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if !tokens.len().is_multiple_of(3) {
        return Err(SfmError::OddObservationTriples { line: lineno });
    }
    tokens
        .chunks_exact(3)
        .map(|c| {
            Ok(Observation {
                x: finite(c[0], "observation x", lineno)?,
                y: finite(c[1], "observation y", lineno)?,
                point3d_id: point_ref(c[2], lineno)?,
            })
        })
        .collect()
}

/// Parses `points3D.txt`: `POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)...`.
pub fn parse_points3d<R: BufRead>(reader: R) -> Result<BTreeMap<Point3dId, Point3D>, SfmError> {
    let mut points = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if is_comment(&line) {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 8 {
            return Err(malformed(lineno, format!("point needs at least 8 fields, found {}", tokens.len())));
        }
        let point3d_id: Point3dId = field(tokens[0], "POINT3D_ID", lineno)?;
        let position = Vector3::new(
            finite(tokens[1], "X", lineno)?,
            finite(tokens[2], "Y", lineno)?,
            finite(tokens[3], "Z", lineno)?,
        );
        let color = [
            field(tokens[4], "R", lineno)?,
            field(tokens[5], "G", lineno)?,
            field(tokens[6], "B", lineno)?,
        ];
        let reprojection_error = finite(tokens[7], "ERROR", lineno)?;
        let rest = &tokens[8..];
        if !rest.len().is_multiple_of(2) {
            return Err(SfmError::OddTrackPairs { line: lineno });
        }
        let track = rest
            .chunks_exact(2)
            .map(|c| {
                Ok(TrackElement {
                    image_id: field(c[0], "track IMAGE_ID", lineno)?,
                    point2d_idx: field(c[1], "track POINT2D_IDX", lineno)?,
                })
            })
            .collect::<Result<Vec<_>, SfmError>>()?;
        let point = Point3D {
            point3d_id,
            position,
            color,
            reprojection_error,
            track,
        };
        if points.insert(point3d_id, point).is_some() {
            return Err(SfmError::DuplicateId {
                line: lineno,
                kind: "point",
                id: point3d_id,
            });
        }
    }
    Ok(points)
}

// Floats are written with Rust's shortest round-trip representation, so re-parsing is exact.

pub fn write_cameras<W: Write>(
    mut out: W,
    cameras: &BTreeMap<CameraId, CameraIntrinsics>,
) -> std::io::Result<()> {
    writeln!(out, "# Camera list with one line of data per camera:")?;
    writeln!(out, "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]")?;
    writeln!(out, "# Number of cameras: {}", cameras.len())?;
    for cam in cameras.values() {
        write!(out, "{} {} {} {} ", cam.camera_id, cam.model.name(), cam.width, cam.height)?;
        match cam.model {
            CameraModel::Pinhole => writeln!(out, "{} {} {} {}", cam.fx, cam.fy, cam.cx, cam.cy)?,
            CameraModel::SimplePinhole => writeln!(out, "{} {} {}", cam.fx, cam.cx, cam.cy)?,
        }
    }
    out.flush()
}

pub fn write_images<W: Write>(
    mut out: W,
    images: &BTreeMap<ImageId, RegisteredImage>,
) -> std::io::Result<()> {
    writeln!(out, "# Image list with two lines of data per image:")?;
    writeln!(out, "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME")?;
    writeln!(out, "#   POINTS2D[] as (X, Y, POINT3D_ID)")?;
    writeln!(out, "# Number of images: {}", images.len())?;
    for image in images.values() {
        let pose = image.pose.to_world_to_camera();
        let [qw, qx, qy, qz] = pose.wxyz();
        let t = pose.translation;
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {}",
            image.image_id, qw, qx, qy, qz, t.x, t.y, t.z, image.camera_id, image.name
        )?;
        let obs: Vec<String> = image
            .observations
            .iter()
            .map(|o| match o.point3d_id {
                Some(id) => format!("{} {} {}", o.x, o.y, id),
                None => format!("{} {} -1", o.x, o.y),
            })
            .collect();
        writeln!(out, "{}", obs.join(" "))?;
    }
    out.flush()
}

pub fn write_points3d<W: Write>(
    mut out: W,
    points: &BTreeMap<Point3dId, Point3D>,
) -> std::io::Result<()> {
    writeln!(out, "# 3D point list with one line of data per point:")?;
    writeln!(out, "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)")?;
    writeln!(out, "# Number of points: {}", points.len())?;
    for p in points.values() {
        write!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.point3d_id,
            p.position.x,
            p.position.y,
            p.position.z,
            p.color[0],
            p.color[1],
            p.color[2],
            p.reprojection_error
        )?;
        for el in &p.track {
            write!(out, " {} {}", el.image_id, el.point2d_idx)?;
        }
        writeln!(out)?;
    }
    out.flush()
}
