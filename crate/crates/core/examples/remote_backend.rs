//! Builds the chat-completions request body for a decision prompt. With
//! AGENT_API_KEY set, the request is also sent.

use std::sync::Arc;

use mobile_operator::backends::{ChatBackend, ChatRequest, RemoteBackend};
use mobile_operator::prompting::{DecisionInputs, TemplateSet};
use mobile_operator::sim::{DeviceSpec, Simulator};
use mobile_operator::{Instruction, Locale, MemoryUnit, TaskProgress};

fn main() {
    let mut sim = Simulator::new(Arc::new(DeviceSpec::demo()));
    let screen = sim.screenshot();
    let perception = sim.ground_truth_perception(&screen).unwrap();
    let ins = Instruction::new("Turn on dark mode").unwrap();
    let bundle = TemplateSet::builtin(Locale::En)
        .render_decision_prompt(&DecisionInputs {
            instruction: &ins,
            progress: &TaskProgress::default(),
            memory: &MemoryUnit::new(),
            last_reflection: None,
            screen: &screen,
            perception: &perception,
            history: &[],
            fault: None,
        })
        .unwrap();
    let req = ChatRequest::from_bundle(bundle, "gpt-4o");
    let mut body = RemoteBackend::request_body(&req);
    // Keep the printout short.
    if let Some(s) = body.pointer_mut("/messages/1/content/1/image_url/url") {
        *s = "data:image/png;base64,...".into();
    }
    println!("{}", serde_json::to_string_pretty(&body).unwrap());

    match RemoteBackend::from_env() {
        Ok(backend) => match backend.complete(&req) {
            Ok(reply) => println!("reply:\n{reply}"),
            Err(e) => println!("request failed: {e}"),
        },
        Err(e) => println!("not sending: {e}"),
    }
}
