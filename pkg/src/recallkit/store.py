"""Document store: messages and memory records partitioned by owner."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import MemoryRecord, MessageRecord, Status


class NotFound(KeyError):
    pass


@dataclass
class _OwnerDocs:
    messages: dict[str, MessageRecord] = field(default_factory=dict)
    memories: dict[str, MemoryRecord] = field(default_factory=dict)
    successor: dict[str, str] = field(default_factory=dict)  # old id -> id that replaced it


class DocumentStore:
    def __init__(self) -> None:
        self._owners: dict[str, _OwnerDocs] = {}

    def owners(self) -> list[str]:
        return sorted(self._owners)

    def _docs(self, owner_id: str) -> _OwnerDocs:
        return self._owners.setdefault(owner_id, _OwnerDocs())

    # -- messages ---------------------------------------------------------

    def put_message(self, msg: MessageRecord) -> None:
        self._docs(msg.owner_id).messages[msg.id] = msg

    def mark_processed(self, owner_id: str, message_ids: list[str]) -> None:
        msgs = self._docs(owner_id).messages
        for mid in message_ids:
            msgs[mid] = replace(msgs[mid], processed=True)

    def messages(self, owner_id: str) -> list[MessageRecord]:
        docs = self._owners.get(owner_id)
        return list(docs.messages.values()) if docs else []

    def message(self, owner_id: str, message_id: str) -> MessageRecord:
        docs = self._owners.get(owner_id)
        if docs is None or message_id not in docs.messages:
            raise NotFound(message_id)
        return docs.messages[message_id]

    def pending(self, owner_id: str) -> list[MessageRecord]:
        return [m for m in self.messages(owner_id) if not m.processed]

    # -- memories ---------------------------------------------------------

    def put_memory(self, rec: MemoryRecord) -> None:
        docs = self._docs(rec.owner_id)
        docs.memories[rec.id] = rec
        if rec.replaces_id is not None:
            docs.successor[rec.replaces_id] = rec.id

    def set_state(self, owner_id: str, memory_id: str, *, is_current: bool, status: Status) -> MemoryRecord:
        docs = self._docs(owner_id)
        rec = docs.memories[memory_id].with_state(is_current=is_current, status=status)
        docs.memories[memory_id] = rec
        return rec

    def get(self, owner_id: str, memory_id: str) -> MemoryRecord:
        docs = self._owners.get(owner_id)
        if docs is None or memory_id not in docs.memories:
            raise NotFound(memory_id)
        return docs.memories[memory_id]

    def find(self, owner_id: str, memory_id: str) -> MemoryRecord | None:
        docs = self._owners.get(owner_id)
        return docs.memories.get(memory_id) if docs else None

    def memories(self, owner_id: str) -> list[MemoryRecord]:
        docs = self._owners.get(owner_id)
        return list(docs.memories.values()) if docs else []

    def successor(self, owner_id: str, memory_id: str) -> str | None:
        docs = self._owners.get(owner_id)
        return docs.successor.get(memory_id) if docs else None

    def chain(self, owner_id: str, memory_id: str) -> list[MemoryRecord]:
        """Full version chain containing ``memory_id``, oldest first."""
        rec = self.get(owner_id, memory_id)
        while rec.replaces_id is not None:
            rec = self.get(owner_id, rec.replaces_id)
        out = [rec]
        while (nxt := self.successor(owner_id, out[-1].id)) is not None:
            out.append(self.get(owner_id, nxt))
        return out
