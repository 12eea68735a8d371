import pytest

from bmas.errors import TemplateError
from bmas.prompts import PromptTemplates, placeholders, render


def test_agent_template_placeholders():
    assert placeholders(PromptTemplates().agent_template) == {"identity", "description", "query"}


def test_render_fills_values():
    out = render(PromptTemplates().agent_template, identity="a chemist", description="Knows bonds.", query="Why?")
    assert "You are a chemist. Knows bonds." in out and "Why?" in out


def test_unbound_placeholder():
    with pytest.raises(TemplateError, match="query"):
        render("Solve {query} as {identity}", identity="x")


def test_literal_braces_survive():
    assert "\\boxed{answer}" in render(PromptTemplates().answer_template, blackboard="", name="critic")


def test_extra_values_are_ignored():
    assert render("hi {name}", name="a", unused=1) == "hi a"


def test_malformed_template():
    with pytest.raises(TemplateError):
        placeholders("broken {")


def test_load_overrides(tmp_path):
    path = tmp_path / "control.txt"
    path.write_text("pick from {roster} for {query} given {blackboard}")
    t = PromptTemplates.load({"control": path})
    assert t.control_template.startswith("pick from")
    assert t.agent_template == PromptTemplates().agent_template


def test_load_generation_alias(tmp_path):
    path = tmp_path / "gen.txt"
    path.write_text("{n} experts for {query}")
    assert PromptTemplates.load({"generation": path}).generation_instruction == "{n} experts for {query}"


def test_load_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.txt"
    with pytest.raises(FileNotFoundError, match="nope.txt"):
        PromptTemplates.load({"agent": missing})


def test_load_unknown_key(tmp_path):
    with pytest.raises(TemplateError):
        PromptTemplates.load({"banana": tmp_path})
