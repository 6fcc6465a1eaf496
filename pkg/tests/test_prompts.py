import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affground.prompts import (
    ParseError,
    extract_list,
    load_templates,
    parse_structured_reply,
    render_alternative_prompt,
    render_object_prompt,
    render_part_prompt,
)


class TestRenderObjectPrompt:
    def test_golden(self):
        prompt = render_object_prompt("cut a rope", ["knife", "bowl"])
        assert prompt == (
            "Your task is to cut a rope. Which of these objects can do this task: "
            "knife, bowl\nAnswer like the following:\n\nObjects:\nReason:"
        )

    def test_single_object_no_trailing_comma(self):
        prompt = render_object_prompt("cut a rope", ["knife"])
        assert "task: knife\n" in prompt
        assert "knife," not in prompt

    def test_multiword_object_verbatim(self):
        prompt = render_object_prompt("talk to someone", ["walkie talkie"])
        assert "walkie talkie" in prompt

    def test_empty_objects_rejected(self):
        with pytest.raises(ValueError):
            render_object_prompt("cut a rope", [])


class TestRenderPartPrompt:
    def test_golden(self):
        prompt = render_part_prompt("grasp the object", "knife")
        assert prompt == (
            "Your task is to grasp the object. Which part of the knife should be "
            "used for this task?\nAnswer like the following:\n\nPart:\nReason:"
        )

    def test_substitution_verbatim(self):
        prompt = render_part_prompt("scoop rice", "spoon")
        assert "scoop rice" in prompt and "spoon" in prompt

    def test_casing_preserved(self):
        assert "the Mug" in render_part_prompt("drink", "Mug")

    def test_empty_argument_rejected(self):
        with pytest.raises(ValueError):
            render_part_prompt("", "knife")


class TestRenderAlternativePrompt:
    def test_golden_single(self):
        prompt = render_alternative_prompt("cup", ["cup body"])
        assert prompt == (
            'The part name "cup body" of the cup could not be found. Give an '
            "alternative common name for this part.\n"
            "Answer like the following:\n\nPart:\nReason:"
        )

    def test_two_failed_parts_both_listed(self):
        prompt = render_alternative_prompt("pot", ["pot top", "pot lid"])
        assert 'part names "pot top", "pot lid"' in prompt

    def test_no_synonym_logic(self):
        prompt = render_alternative_prompt("pot", ["pot top"])
        assert "pot top" in prompt and "alternative common name" in prompt

    def test_empty_failed_parts_rejected(self):
        with pytest.raises(ValueError):
            render_alternative_prompt("pot", [])


class TestRenderingDeterminism:
    def test_byte_identical_across_calls(self):
        a = render_object_prompt("pound a nail", ["hammer", "mallet"])
        b = render_object_prompt("pound a nail", ["hammer", "mallet"])
        assert a == b


class TestParseStructuredReply:
    def test_two_sections(self):
        reply = parse_structured_reply("Objects: knife\nReason: it cuts", ["objects", "reason"])
        assert reply.sections == {"objects": "knife", "reason": "it cuts"}
        assert reply.raw == "Objects: knife\nReason: it cuts"

    def test_case_and_spacing_tolerant(self):
        reply = parse_structured_reply("OBJECTS:knife", ["objects"])
        assert reply.sections["objects"] == "knife"

    def test_missing_header_raises_with_raw(self):
        with pytest.raises(ParseError) as err:
            parse_structured_reply("knife is best", ["objects"])
        assert err.value.raw == "knife is best"

    def test_multiline_body(self):
        text = "Part:\n- blade\n- edge\nReason: sharp"
        reply = parse_structured_reply(text, ["part", "reason"])
        assert reply.sections["part"] == "- blade\n- edge"

    @settings(max_examples=100, deadline=None)
    @given(
        h1=st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ",
                   min_size=1, max_size=8),
        h2=st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ",
                   min_size=1, max_size=8),
        a=st.text(alphabet="abcdefghij0123456789 ", max_size=20),
        b=st.text(alphabet="abcdefghij0123456789 ", max_size=20),
    )
    def test_roundtrip_synthetic_render(self, h1, h2, a, b):
        if h1.lower() == h2.lower():
            return
        text = f"{h1}: {a}\n{h2}: {b}"
        reply = parse_structured_reply(text, [h1, h2])
        assert reply.sections[h1.lower()] == a.strip()
        assert reply.sections[h2.lower()] == b.strip()


class TestExtractList:
    def test_commas(self):
        assert extract_list("knife, scissors") == ["knife", "scissors"]

    def test_bullets_and_dedup(self):
        assert extract_list("- knife\n- Knife") == ["knife"]

    def test_numbered(self):
        assert extract_list("1. blade\n2) edge") == ["blade", "edge"]

    def test_empty(self):
        assert extract_list("") == []

    @settings(max_examples=100, deadline=None)
    @given(st.text(alphabet="abcXYZ ,\n-*.", max_size=40))
    def test_idempotent(self, body):
        once = extract_list(body)
        assert extract_list("\n".join(once)) == once


class TestTemplateLoading:
    def test_json_override(self, tmp_path):
        path = tmp_path / "templates.json"
        path.write_text(json.dumps({
            "part_query": "For {task}, name the part of the {object}.\nPart:\nReason:"
        }))
        templates = load_templates(path)
        prompt = render_part_prompt("grasp the object", "mug", templates)
        assert prompt.startswith("For grasp the object, name the part of the mug.")
        # untouched templates keep defaults
        assert "Which of these objects" in render_object_prompt("x", ["y"], templates)

    def test_toml_override(self, tmp_path):
        path = tmp_path / "templates.toml"
        path.write_text(
            'object_select = "Task {task}; candidates {objects}.\\nObjects:\\nReason:"\n'
        )
        templates = load_templates(path)
        assert render_object_prompt("dig", ["trowel"], templates).startswith(
            "Task dig; candidates trowel."
        )

    def test_unknown_template_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"other": "x"}))
        with pytest.raises(ValueError):
            load_templates(path)

    def test_wrong_placeholders_rejected(self, tmp_path):
        path = tmp_path / "bad2.json"
        path.write_text(json.dumps({"part_query": "no placeholders"}))
        with pytest.raises(ValueError):
            load_templates(path)
