use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};

use super::{GatewayError, PromptSpec};
use crate::cvss::{BaseVector, MetricKind};

/// A worked example shown to the model before the queried descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotExample {
    pub description: String,
    pub labels: BaseVector,
}

/// System and user messages of one chat request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// The exact text that is hashed for cache keys.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.text().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

const ROLE: &str = "You are a cybersecurity expert trained in analyzing vulnerability \
descriptions and generating their target variables: Attack Vector, Attack Complexity, \
Privileges Required, User Interaction, Scope, Confidentiality Impact, Integrity Impact, \
and Availability Impact.";

// Synthetic vulnerabilities with fictional products; none is a published record.
const SHOTS: [(&str, &str); 10] = [
    (
        "A SQL injection vulnerability in the login form of ExampleSoft HelpDesk 3.2 allows \
unauthenticated remote attackers to execute arbitrary SQL commands via the username parameter.",
        "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
    ),
    (
        "A stored cross-site scripting issue in the comment editor of Contoso Wiki 1.8 allows \
authenticated users to inject arbitrary web script that executes in the browser of any user who \
views the affected page.",
        "CVSS:3.1/AV:N/AC:L/PR:L/UI:R/S:C/C:L/I:L/A:N",
    ),
    (
        "A race condition in the SampleVault kernel driver allows a local low-privileged user to \
escalate privileges by winning a time-of-check to time-of-use window.",
        "CVSS:3.1/AV:L/AC:H/PR:L/UI:N/S:U/C:H/I:H/A:H",
    ),
    (
        "Improper validation of Bluetooth pairing packets in the SampleBand fitness tracker \
firmware allows an attacker within radio range to crash the device.",
        "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H",
    ),
    (
        "The boot loader of the DemoTab tablet leaves the debug port unlocked, allowing an \
attacker with physical access to read stored credentials.",
        "CVSS:3.1/AV:P/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N",
    ),
    (
        "A path traversal flaw in the backup export endpoint of the Widgetly admin console allows \
administrators to read arbitrary files on the host.",
        "CVSS:3.1/AV:N/AC:L/PR:H/UI:N/S:U/C:H/I:N/A:N",
    ),
    (
        "Uncontrolled recursion in the document parser of Sample Office Suite allows attackers to \
cause a denial of service if a user opens a crafted file.",
        "CVSS:3.1/AV:L/AC:L/PR:N/UI:R/S:U/C:N/I:N/A:H",
    ),
    (
        "A server-side request forgery in the webhook feature of ExampleCloud Gateway allows \
unauthenticated attackers to reach internal services and read instance metadata.",
        "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:C/C:H/I:N/A:N",
    ),
    (
        "An open redirect in the logout handler of Contoso Portal lets attackers send users to \
arbitrary sites via a crafted link.",
        "CVSS:3.1/AV:N/AC:L/PR:N/UI:R/S:C/C:L/I:L/A:N",
    ),
    (
        "Missing authorization checks in the REST API of Fabrikam Inventory allow authenticated \
low-privileged users to modify records that belong to other tenants.",
        "CVSS:3.1/AV:N/AC:L/PR:L/UI:N/S:U/C:N/I:H/A:N",
    ),
];

/// The ten bundled synthetic examples; a k-shot prompt uses the first k.
pub fn bundled_shots() -> Vec<ShotExample> {
    SHOTS
        .iter()
        .map(|(description, vector)| ShotExample {
            description: (*description).to_owned(),
            labels: vector.parse().expect("bundled vectors are valid"),
        })
        .collect()
}

fn id_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bCVE-\d{4}-\d{4,}\b").unwrap())
}

fn prefix_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)CVE-").unwrap())
}

/// Removes record identifiers from description text so the model has to
/// classify rather than recall.
pub fn redact_identifiers(text: &str) -> String {
    let text = id_pattern().replace_all(text, "[another vulnerability]");
    prefix_pattern().replace_all(&text, "CVE ").into_owned()
}

fn answer_line(labels: &BaseVector) -> String {
    MetricKind::ALL
        .iter()
        .map(|k| k.level_name(labels.get(*k)))
        .collect::<Vec<_>>()
        .join(" | ")
}

fn allowed_values() -> String {
    MetricKind::ALL
        .iter()
        .map(|k| {
            let levels: Vec<&str> = k.levels().iter().map(|v| k.level_name(*v)).collect();
            format!("- {}: {}", k.name(), levels.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_prompt<S: AsRef<str>>(
    descriptions: &[S],
    spec: &PromptSpec,
) -> Result<Prompt, GatewayError> {
    if descriptions.is_empty() {
        return Err(GatewayError::EmptyBatch);
    }
    if descriptions.len() > spec.batch_size {
        return Err(GatewayError::OversizedBatch {
            len: descriptions.len(),
            max: spec.batch_size,
        });
    }
    spec.validate()?;

    let order: Vec<&str> = MetricKind::ALL.iter().map(|k| k.name()).collect();
    let mut user = String::new();
    user.push_str(
        "Step 1: For each vulnerability description below, extract the eight CVSS v3.1 base \
metrics.\n",
    );
    user.push_str(&format!(
        "Step 2: Output them in a fixed format: exactly one line per description, in the same \
order as the descriptions, with the eight values separated by \" | \" in this order:\n{}\n",
        order.join(" | ")
    ));
    user.push_str("Allowed values:\n");
    user.push_str(&allowed_values());
    user.push_str(
        "\nDo not number the lines, do not repeat the descriptions and do not add any other \
text.\n",
    );

    if !spec.shot_examples.is_empty() {
        user.push_str("\nExamples:\n");
        for shot in &spec.shot_examples {
            user.push_str(&format!(
                "Description: {}\nAnswer: {}\n",
                redact_identifiers(&shot.description),
                answer_line(&shot.labels)
            ));
        }
    }

    user.push_str(&format!("\nDescriptions ({}):\n", descriptions.len()));
    for (i, d) in descriptions.iter().enumerate() {
        user.push_str(&format!("[{}] {}\n", i + 1, redact_identifiers(d.as_ref())));
    }

    Ok(Prompt {
        system: ROLE.to_owned(),
        user,
    })
}
