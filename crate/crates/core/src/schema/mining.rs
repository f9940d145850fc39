use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{Concept, ConceptProvenance, ConceptStage, SceneProfile};
use crate::error::{Error, Result};
use crate::providers::Completer;
use crate::text::normalize_label;

pub const SCENE_SLOT: &str = "{S}";
pub const PROFILE_SLOT: &str = "{W}";

pub const DEFAULT_TEMPLATE: &str =
    "An embodied agent is working in a {S}. Scene description: {W}\n\
List the physical objects that belong in this scene, one per line.";

/// Fixture key for the prompt built from profile `index`, e.g. `kitchen-profile-0`.
pub fn prompt_key(scene: &str, index: usize) -> String {
    format!(
        "{}-profile-{index}",
        normalize_label(scene).replace(' ', "-")
    )
}

/// Fills the scene slot `{S}` and profile slot `{W}` once per profile entry.
///
/// The template must contain each slot exactly once.
pub fn build_prompt(profile: &SceneProfile, template: &str) -> Result<Vec<String>> {
    profile.validate()?;
    let scene_slots = template.matches(SCENE_SLOT).count();
    let profile_slots = template.matches(PROFILE_SLOT).count();
    for (slot, count) in [(SCENE_SLOT, scene_slots), (PROFILE_SLOT, profile_slots)] {
        if count != 1 {
            return Err(Error::Template(format!(
                "template must contain the {slot} slot exactly once (found {count})"
            )));
        }
    }
    // Substitute the scene first so profile text is never re-scanned for slots.
    let with_scene = template.replace(SCENE_SLOT, profile.scene.trim());
    let (before, after) = with_scene
        .split_once(PROFILE_SLOT)
        .ok_or_else(|| Error::Template("scene name contains the profile slot".into()))?;
    Ok(profile
        .profiles
        .iter()
        .map(|w| format!("{before}{}{after}", w.trim()))
        .collect())
}

fn strip_list_marker(item: &str) -> &str {
    let item = item.trim();
    let item = item.trim_start_matches(['-', '*', '•', '+']).trim_start();
    let digits = item.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &item[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    item
}

/// Splits raw model outputs into normalized candidate labels, dropping list
/// markers ("-", "*", "1.", "2)") and empty items. Order is preserved.
pub fn parse_candidates(outputs: &[String]) -> Vec<String> {
    outputs
        .iter()
        .flat_map(|o| o.split(['\n', ',']))
        .map(strip_list_marker)
        .map(normalize_label)
        .filter(|l| !l.is_empty())
        .collect()
}

/// Prompts the model once per profile and collects the raw concept set.
///
/// Prompts are issued concurrently; results are merged in prompt order so a
/// label's provenance is always the first prompt that produced it.
pub fn mine_concepts<C: Completer + ?Sized>(
    profile: &SceneProfile,
    template: &str,
    completer: &C,
) -> Result<Vec<Concept>> {
    let prompts = build_prompt(profile, template)?;
    let responses: Vec<Result<Vec<String>>> = prompts
        .par_iter()
        .enumerate()
        .map(|(i, prompt)| completer.complete(&prompt_key(&profile.scene, i), prompt))
        .collect();

    let mut seen = BTreeSet::new();
    let mut raw = Vec::new();
    for (index, response) in responses.into_iter().enumerate() {
        for label in parse_candidates(&response?) {
            if seen.insert(label.clone()) {
                raw.push(Concept::new(
                    label,
                    ConceptStage::Raw,
                    ConceptProvenance::Prompt { index },
                ));
            }
        }
    }
    if raw.is_empty() {
        log::warn!(
            "concept mining for scene `{}` produced no concepts",
            profile.scene
        );
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::providers::Provider;

    fn profile(ws: &[&str]) -> SceneProfile {
        SceneProfile {
            scene: "kitchen".into(),
            profiles: ws.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn fills_both_slots() {
        let out = build_prompt(
            &profile(&["there is a sink"]),
            "List objects in a {S} given: {W}",
        )
        .unwrap();
        assert_eq!(
            out,
            vec!["List objects in a kitchen given: there is a sink"]
        );
    }

    #[test]
    fn missing_slot_is_template_error() {
        let p = profile(&["x"]);
        assert!(matches!(
            build_prompt(&p, "List objects given: {W}"),
            Err(Error::Template(_))
        ));
        assert!(matches!(
            build_prompt(&p, "List objects in {S}"),
            Err(Error::Template(_))
        ));
        assert!(matches!(
            build_prompt(&p, "{S} {W} {W}"),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn one_prompt_per_profile_in_order() {
        let out = build_prompt(&profile(&["a", "b", "c"]), "{S}: {W}").unwrap();
        assert_eq!(out, vec!["kitchen: a", "kitchen: b", "kitchen: c"]);
        assert!(DEFAULT_TEMPLATE.contains(SCENE_SLOT) && DEFAULT_TEMPLATE.contains(PROFILE_SLOT));
    }

    #[test]
    fn candidate_parsing() {
        let raw = vec!["1. Mug\n2) Sink\n- cutting  board, Stove\n\n* ".to_string()];
        assert_eq!(
            parse_candidates(&raw),
            vec!["mug", "sink", "cutting board", "stove"]
        );
    }

    fn fixture(entries: &[(&str, &[&str])]) -> Provider {
        let map: BTreeMap<String, Vec<String>> = entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect();
        Provider::from_fixture_map(map)
    }

    #[test]
    fn mining_normalizes_and_dedupes() {
        let p = fixture(&[("kitchen-profile-0", &["Mug", " mug ", "sink"])]);
        let raw = mine_concepts(&profile(&["w0"]), "{S} {W}", &p).unwrap();
        let labels: Vec<_> = raw.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, vec!["mug", "sink"]);
        assert!(raw.iter().all(|c| c.stage == ConceptStage::Raw));
    }

    #[test]
    fn mining_tracks_prompt_provenance() {
        let p = fixture(&[
            ("kitchen-profile-0", &["mug"]),
            ("kitchen-profile-1", &["sink", "mug"]),
        ]);
        let raw = mine_concepts(&profile(&["w0", "w1"]), "{S} {W}", &p).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw[0].provenance, ConceptProvenance::Prompt { index: 0 });
        assert_eq!(raw[1].label, "sink");
        assert_eq!(raw[1].provenance, ConceptProvenance::Prompt { index: 1 });
    }

    #[test]
    fn provider_errors_propagate_and_empty_is_ok() {
        let p = fixture(&[("kitchen-profile-0", &[])]);
        assert!(mine_concepts(&profile(&["w0"]), "{S} {W}", &p)
            .unwrap()
            .is_empty());
        assert!(matches!(
            mine_concepts(&profile(&["w0", "w1"]), "{S} {W}", &p),
            Err(Error::FixtureMiss(k)) if k == "kitchen-profile-1"
        ));
    }
}
