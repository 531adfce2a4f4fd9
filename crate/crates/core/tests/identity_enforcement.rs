use ami_core::mcp::McpServer;
use ami_core::tools::identity::{enforce_call, enforce_identity};
use ami_testkit::registry::{adversarial_value, echo_registry, random_definitions};
use rand::Rng;
use serde_json::{json, Map, Value};

// Every identity slot reaching an echo handler through tools/call holds the
// caller, whatever the arguments claimed.
#[test]
fn handlers_only_ever_see_the_caller() {
    let mut rng = ami_testkit::rng(99);
    let mut checked = 0;
    while checked < 1000 {
        let defs = random_definitions(&mut rng, 5);
        let server = McpServer::new(echo_registry(&defs));
        for def in &defs {
            let caller = ["alice", "bob", "carol"][rng.random_range(0..3)];
            let mut args = Map::new();
            for p in &def.identity_params {
                args.insert(p.clone(), adversarial_value(&mut rng));
            }
            let once = enforce_identity(def, args.clone(), caller);
            assert_eq!(enforce_identity(def, once.clone(), caller), once);
            assert_eq!(enforce_call(server.registry(), &def.name, args.clone(), caller).unwrap(), once);
            for (k, v) in &args {
                if !def.identity_params.contains(k) {
                    assert_eq!(&once[k], v);
                }
            }

            let Ok(result) = server.call_tool(&def.name, args, caller) else {
                // other required arguments are missing: rejected before any handler runs
                continue;
            };
            for p in &def.identity_params {
                assert_eq!(result.content["args"][p], json!(caller), "{}.{p}", def.name);
            }
            assert_eq!(result.content["caller"], Value::from(caller));
            checked += 1;
        }
    }
}
