use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{ChatMessage, Conversation};
use crate::journal::{self, Journal, JournalError, MemoryJournal};

#[derive(Serialize, Deserialize)]
struct Entry {
    user_id: String,
    at: DateTime<Utc>,
    message: ChatMessage,
}

/// One conversation per user. Each user's conversation sits behind its own
/// mutex, so turns by the same user serialize while different users proceed
/// in parallel. New messages are journaled after every turn.
pub struct ConversationStore {
    conversations: Mutex<HashMap<String, Arc<Mutex<Conversation>>>>,
    journal: Box<dyn Journal>,
}

impl Default for ConversationStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl ConversationStore {
    pub fn in_memory() -> Self {
        Self {
            conversations: Mutex::new(HashMap::new()),
            journal: Box::new(MemoryJournal::new()),
        }
    }

    pub fn open(journal: Box<dyn Journal>) -> Result<Self, JournalError> {
        let mut map: HashMap<String, Conversation> = HashMap::new();
        for e in journal::replay::<Entry>(journal.as_ref())? {
            let conv = map
                .entry(e.user_id.clone())
                .or_insert_with(|| Conversation::new(e.user_id.clone(), e.at));
            conv.messages.push(e.message);
            conv.updated_at = e.at;
        }
        Ok(Self {
            conversations: Mutex::new(
                map.into_iter()
                    .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
                    .collect(),
            ),
            journal,
        })
    }

    fn slot(&self, user_id: &str, now: DateTime<Utc>) -> Arc<Mutex<Conversation>> {
        self.conversations
            .lock()
            .entry(user_id.to_owned())
            .or_insert_with(|| Arc::new(Mutex::new(Conversation::new(user_id, now))))
            .clone()
    }

    /// Run `f` with exclusive access to the user's conversation and persist
    /// whatever it appended.
    pub fn with_conversation<R>(
        &self,
        user_id: &str,
        now: DateTime<Utc>,
        f: impl FnOnce(&mut Conversation) -> R,
    ) -> Result<R, JournalError> {
        let slot = self.slot(user_id, now);
        let mut conv = slot.lock();
        let before = conv.messages.len();
        let out = f(&mut conv);
        if conv.messages.len() < before {
            // rewritten history: journal nothing rather than a misleading suffix
            return Ok(out);
        }
        for message in &conv.messages[before..] {
            journal::append_record(
                self.journal.as_ref(),
                &Entry {
                    user_id: user_id.to_owned(),
                    at: now,
                    message: message.clone(),
                },
            )?;
        }
        if conv.messages.len() > before {
            conv.updated_at = now;
        }
        Ok(out)
    }

    pub fn snapshot(&self, user_id: &str) -> Option<Conversation> {
        let slot = self.conversations.lock().get(user_id).cloned()?;
        let conv = slot.lock().clone();
        Some(conv)
    }
}
