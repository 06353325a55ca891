//! Track metadata: who was recorded, in which recording, and the ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Label, RadarTarget, TargetWindow, TrackId};
use crate::sim::SimRecording;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackInfo {
    pub subject_id: String,
    pub recording_id: String,
    #[serde(default)]
    pub label: Label,
}

/// Sidecar of a target log, keyed by track id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tracks: BTreeMap<String, TrackInfo>,
}

impl Manifest {
    pub fn get(&self, track: &TrackId) -> Option<&TrackInfo> {
        self.tracks.get(track.as_str())
    }

    /// Metadata for `track`, falling back to a `subject/recording` reading
    /// of the id itself (unlabeled).
    pub fn info(&self, track: &TrackId) -> TrackInfo {
        if let Some(info) = self.get(track) {
            return info.clone();
        }
        let id = track.as_str();
        let (subject, recording) = id.split_once('/').unwrap_or((id, id));
        TrackInfo { subject_id: subject.to_string(), recording_id: recording.to_string(), label: Label::default() }
    }

    /// Copies each track's label onto its windows.
    pub fn label_windows(&self, windows: &mut [TargetWindow]) {
        for w in windows {
            if let Some(info) = self.get(&w.track) {
                w.label = Some(info.label);
            }
        }
    }

    pub fn from_recordings(recordings: &[SimRecording]) -> Self {
        let tracks = recordings
            .iter()
            .map(|r| {
                let info = TrackInfo {
                    subject_id: r.plan.subject_id.clone(),
                    recording_id: r.plan.recording_id.clone(),
                    label: r.plan.spec.label(),
                };
                (r.plan.track().0, info)
            })
            .collect();
        Manifest { tracks }
    }
}

/// Concatenated target stream of simulated recordings plus its manifest.
pub fn flatten_recordings(recordings: &[SimRecording]) -> (Vec<RadarTarget>, Manifest) {
    let targets = recordings.iter().flat_map(|r| r.targets.iter().cloned()).collect();
    (targets, Manifest::from_recordings(recordings))
}
