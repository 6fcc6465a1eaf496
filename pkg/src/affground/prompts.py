"""Prompt rendering and structured-reply parsing for the language backend.

Rendering is pure and byte-deterministic; the mock backends key their
scripted replies on a fingerprint of the rendered text, so any change
to a template is a breaking change for recorded fixtures. Templates can
be overridden from a TOML/JSON file for experimentation.
"""

from __future__ import annotations

import json
import re
import string
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ParseError(ValueError):
    """The reply lacks a required section header; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def render(self, **values: str) -> str:
        return self.body.format(**values)


_PLACEHOLDERS = {
    "object_select": {"task", "objects"},
    "part_query": {"task", "object"},
    "alternative_part": {"plural", "failed", "object"},
}

DEFAULT_OBJECT_SELECT = PromptTemplate(
    name="object_select",
    body=(
        "Your task is to {task}. Which of these objects can do this task: {objects}\n"
        "Answer like the following:\n\nObjects:\nReason:"
    ),
)

DEFAULT_PART_QUERY = PromptTemplate(
    name="part_query",
    body=(
        "Your task is to {task}. Which part of the {object} should be used for this task?\n"
        "Answer like the following:\n\nPart:\nReason:"
    ),
)

DEFAULT_ALTERNATIVE_PART = PromptTemplate(
    name="alternative_part",
    body=(
        "The part name{plural} {failed} of the {object} could not be found. "
        "Give an alternative common name for this part.\n"
        "Answer like the following:\n\nPart:\nReason:"
    ),
)


@dataclass(frozen=True)
class TemplateSet:
    object_select: PromptTemplate = DEFAULT_OBJECT_SELECT
    part_query: PromptTemplate = DEFAULT_PART_QUERY
    alternative_part: PromptTemplate = DEFAULT_ALTERNATIVE_PART


DEFAULT_TEMPLATES = TemplateSet()


def _check_placeholders(name: str, body: str) -> None:
    found = {
        field for _, field, _, _ in string.Formatter().parse(body) if field is not None
    }
    expected = _PLACEHOLDERS[name]
    if found != expected:
        raise ValueError(
            f"template {name!r} must use exactly placeholders {sorted(expected)}, "
            f"found {sorted(found)}"
        )


def templates_from_mapping(doc: dict) -> TemplateSet:
    """Build a TemplateSet from a name -> body mapping; defaults fill the gaps."""
    templates = DEFAULT_TEMPLATES
    for name, body in doc.items():
        if name not in _PLACEHOLDERS:
            raise ValueError(f"unknown template {name!r}")
        if not isinstance(body, str):
            raise ValueError(f"template {name!r} body must be a string")
        _check_placeholders(name, body)
        templates = replace(templates, **{name: PromptTemplate(name=name, body=body)})
    return templates


def load_templates(path: str | Path) -> TemplateSet:
    """Load template overrides from a TOML or JSON file.

    The file maps template names (object_select, part_query,
    alternative_part) to body strings; unspecified templates keep
    their compiled-in defaults.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
    else:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: template file must map names to bodies")
    try:
        return templates_from_mapping(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def render_object_prompt(
    task: str, objects: Sequence[str], templates: TemplateSet = DEFAULT_TEMPLATES
) -> str:
    """Prompt asking which of the detected objects suits the task."""
    if not task:
        raise ValueError("task must be non-empty")
    if not objects:
        raise ValueError("object list must be non-empty")
    return templates.object_select.render(task=task, objects=", ".join(objects))


def render_part_prompt(
    task: str, object_name: str, templates: TemplateSet = DEFAULT_TEMPLATES
) -> str:
    """Prompt asking which part of the chosen object performs the task."""
    if not task or not object_name:
        raise ValueError("task and object_name must be non-empty")
    return templates.part_query.render(task=task, object=object_name)


def render_alternative_prompt(
    object_name: str,
    failed_parts: Sequence[str],
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> str:
    """Prompt asking for another common name after segmentation misses.

    Every previously failed name is listed so the model is steered away
    from repeating them.
    """
    if not object_name:
        raise ValueError("object_name must be non-empty")
    if not failed_parts:
        raise ValueError("failed_parts must be non-empty")
    listed = ", ".join(f'"{p}"' for p in failed_parts)
    plural = "s" if len(failed_parts) > 1 else ""
    return templates.alternative_part.render(
        plural=plural, failed=listed, object=object_name
    )


@dataclass(frozen=True)
class StructuredReply:
    """Sections parsed from a header-delimited reply; headers lowercased."""

    sections: dict[str, str]
    raw: str


def parse_structured_reply(text: str, required_headers: Sequence[str]) -> StructuredReply:
    """Split `text` into sections delimited by `Header:` lines.

    Matching is case-insensitive and tolerates leading whitespace; a
    section body runs until the next recognized header or end of text.
    Raises ParseError (carrying the raw text) when a required header is
    missing.
    """
    if not text:
        raise ParseError("empty reply", raw=text)
    headers = [h.lower() for h in required_headers]
    pattern = re.compile(
        r"^[ \t]*(" + "|".join(re.escape(h) for h in headers) + r")[ \t]*:(.*)$",
        re.IGNORECASE | re.MULTILINE,
    )
    matches = list(pattern.finditer(text))
    sections: dict[str, str] = {}
    for i, match in enumerate(matches):
        header = match.group(1).lower()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        body = (match.group(2) + text[match.end():end]).strip()
        sections.setdefault(header, body)
    missing = [h for h in headers if h not in sections]
    if missing:
        raise ParseError(f"reply is missing section(s) {missing}: {text!r}", raw=text)
    return StructuredReply(sections=sections, raw=text)


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def extract_list(section_body: str) -> list[str]:
    """Split a section body into items on commas/newlines.

    Strips whitespace and list bullets, drops empties, preserves order,
    and deduplicates case-insensitively keeping the first casing.
    """
    items: list[str] = []
    seen: set[str] = set()
    for raw in re.split(r"[,\n]", section_body):
        item = raw.strip()
        while True:  # strip stacked bullet markers to a fixed point
            stripped = _BULLET.sub("", item, count=1).strip()
            if stripped == item:
                break
            item = stripped
        if not item:
            continue
        key = item.casefold()
        if key in seen:
            continue
        seen.add(key)
        items.append(item)
    return items
