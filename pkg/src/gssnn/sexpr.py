"""Minimal s-expression reader/writer used for program and library text."""

from __future__ import annotations


class SexprError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    tokens = []
    buf = []
    for ch in text:
        if ch in "()":
            if buf:
                tokens.append("".join(buf))
                buf = []
            tokens.append(ch)
        elif ch.isspace():
            if buf:
                tokens.append("".join(buf))
                buf = []
        else:
            buf.append(ch)
    if buf:
        tokens.append("".join(buf))
    return tokens


def parse(text: str):
    """Parse one s-expression into nested lists of atom strings."""
    tokens = tokenize(text)
    if not tokens:
        raise SexprError("empty input")
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(tokens):
            raise SexprError("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(read())
            if pos >= len(tokens):
                raise SexprError("unbalanced '('")
            pos += 1  # consume ')'
            if not items:
                raise SexprError("empty list")
            return items
        if tok == ")":
            raise SexprError("unbalanced ')'")
        return tok

    out = read()
    if pos != len(tokens):
        raise SexprError(f"trailing tokens at {pos}")
    return out


def format(tree) -> str:
    if isinstance(tree, str):
        return tree
    return "(" + " ".join(format(t) for t in tree) + ")"
