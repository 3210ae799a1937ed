//! Lossless lexical analysis for the supported source languages.
//!
//! The lexer only classifies tokens (strings, comments, numbers,
//! identifiers, keywords, operators). It never parses, and it never fails
//! on malformed input: an unterminated string or comment simply runs to the
//! end of the line or file. Concatenating the token texts always gives back
//! the source.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::datamodel::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    String,
    Comment,
    Operator,
    Punctuation,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeToken {
    pub kind: TokenKind,
    pub text: String,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("language `{0}` has no lexer")]
pub struct UnsupportedLanguage(pub Language);

pub(crate) struct Syntax {
    line_comment: &'static str,
    block_comment: Option<(&'static str, &'static str)>,
    quotes: &'static [char],
    triple_quotes: bool,
    /// `true` when backtick strings are raw (Go); `false` when they allow escapes (JS).
    raw_backtick: bool,
    string_prefixes: &'static [&'static str],
    prefixes_case_insensitive: bool,
    raw_string_prefix: bool,
    dollar_in_ident: bool,
    preprocessor: bool,
    pub(crate) keywords: &'static [&'static str],
    pub(crate) builtins: &'static [&'static str],
    pub(crate) import_keywords: &'static [&'static str],
}

const PY_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def",
    "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is",
    "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

const PY_BUILTINS: &[&str] = &[
    "print", "len", "range", "int", "str", "float", "bool", "list", "dict", "set", "tuple", "frozenset",
    "bytes", "bytearray", "object", "type", "isinstance", "issubclass", "enumerate", "zip", "map",
    "filter", "sorted", "reversed", "sum", "min", "max", "abs", "round", "pow", "divmod", "open",
    "input", "iter", "next", "any", "all", "hash", "id", "repr", "chr", "ord", "hex", "oct", "bin",
    "format", "getattr", "setattr", "hasattr", "delattr", "super", "property", "staticmethod",
    "classmethod", "callable", "vars", "globals", "locals", "dir", "slice", "complex", "self", "cls",
    "Exception", "ValueError", "TypeError", "KeyError", "IndexError", "AttributeError", "RuntimeError",
    "StopIteration", "NotImplementedError", "ZeroDivisionError", "AssertionError", "OSError",
    "ImportError", "NameError", "OverflowError", "ArithmeticError", "NotImplemented", "Ellipsis",
    "List", "Dict", "Set", "Tuple", "Optional", "Any", "Union", "Callable",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
    "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp",
    "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "true", "false", "null", "var", "record", "yield",
];

const JAVA_BUILTINS: &[&str] = &[
    "main", "String", "System", "Integer", "Long", "Double", "Float", "Boolean", "Character", "Byte",
    "Short", "Math", "Object", "List", "ArrayList", "LinkedList", "Map", "HashMap", "TreeMap", "Set",
    "HashSet", "TreeSet", "Arrays", "Collections", "Scanner", "Exception", "RuntimeException",
    "IllegalArgumentException", "IllegalStateException", "NullPointerException",
    "IndexOutOfBoundsException", "StringBuilder", "Iterator", "Iterable", "Override", "Deque",
    "ArrayDeque", "Queue", "PriorityQueue", "Stack", "Optional", "Objects", "Comparator", "Test",
    "Assert", "assertEquals", "assertTrue", "assertFalse", "assertNull", "assertNotNull",
];

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict",
    "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while", "_Bool", "_Complex",
];

const C_BUILTINS: &[&str] = &[
    "main", "printf", "scanf", "fprintf", "sprintf", "snprintf", "puts", "gets", "fgets", "getchar",
    "putchar", "malloc", "calloc", "realloc", "free", "strlen", "strcpy", "strncpy", "strcmp",
    "strncmp", "strcat", "strncat", "strchr", "strstr", "memcpy", "memmove", "memset", "memcmp",
    "fopen", "fclose", "fread", "fwrite", "exit", "abs", "assert", "atoi", "atol", "qsort", "NULL",
    "FILE", "EOF", "stdin", "stdout", "stderr", "size_t", "ssize_t", "bool", "true", "false",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t", "int8_t", "int16_t", "int32_t", "int64_t",
    "INT_MAX", "INT_MIN",
];

const CPP_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "return", "short",
    "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void",
    "volatile", "while", "alignas", "alignof", "asm", "bool", "catch", "char16_t", "char32_t",
    "char8_t", "class", "concept", "consteval", "constexpr", "constinit", "const_cast", "co_await",
    "co_return", "co_yield", "decltype", "delete", "dynamic_cast", "explicit", "export", "false",
    "friend", "mutable", "namespace", "new", "noexcept", "nullptr", "operator", "private",
    "protected", "public", "reinterpret_cast", "requires", "static_assert", "static_cast",
    "template", "this", "thread_local", "throw", "true", "try", "typeid", "typename", "using",
    "virtual", "wchar_t", "override", "final",
];

const CPP_BUILTINS: &[&str] = &[
    "main", "std", "cout", "cin", "cerr", "endl", "vector", "string", "map", "set", "unordered_map",
    "unordered_set", "pair", "make_pair", "queue", "stack", "deque", "priority_queue", "sort", "min",
    "max", "swap", "size_t", "printf", "scanf", "malloc", "free", "memset", "memcpy", "strlen", "NULL",
    "assert", "abs", "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t",
    "uint64_t",
];

const JS_KEYWORDS: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete", "do",
    "else", "export", "extends", "finally", "for", "function", "if", "import", "in", "instanceof",
    "new", "return", "super", "switch", "this", "throw", "try", "typeof", "var", "void", "while",
    "with", "yield", "let", "static", "enum", "await", "async", "true", "false", "null",
];

const JS_BUILTINS: &[&str] = &[
    "console", "Math", "Array", "Object", "String", "Number", "Boolean", "JSON", "Promise", "Map",
    "Set", "WeakMap", "WeakSet", "Date", "Error", "TypeError", "RangeError", "RegExp", "Symbol",
    "BigInt", "parseInt", "parseFloat", "isNaN", "isFinite", "undefined", "NaN", "Infinity",
    "require", "module", "exports", "window", "document", "setTimeout", "setInterval",
    "clearTimeout", "arguments", "describe", "it", "test", "expect", "of",
];

const GO_KEYWORDS: &[&str] = &[
    "break", "case", "chan", "const", "continue", "default", "defer", "else", "fallthrough", "for",
    "func", "go", "goto", "if", "import", "interface", "map", "package", "range", "return", "select",
    "struct", "switch", "type", "var",
];

const GO_BUILTINS: &[&str] = &[
    "main", "true", "false", "nil", "iota", "int", "int8", "int16", "int32", "int64", "uint", "uint8",
    "uint16", "uint32", "uint64", "uintptr", "float32", "float64", "complex64", "complex128",
    "string", "bool", "byte", "rune", "error", "any", "append", "cap", "close", "copy", "delete",
    "len", "make", "new", "panic", "print", "println", "recover", "min", "max", "fmt", "strings",
    "strconv", "math", "sort", "os", "errors", "bytes", "sync", "time", "io", "bufio", "testing",
];

const CLIKE_OPEN_QUOTES: &[char] = &['"', '\''];

fn syntax(language: Language) -> Option<Syntax> {
    let base = Syntax {
        line_comment: "//",
        block_comment: Some(("/*", "*/")),
        quotes: CLIKE_OPEN_QUOTES,
        triple_quotes: false,
        raw_backtick: false,
        string_prefixes: &[],
        prefixes_case_insensitive: false,
        raw_string_prefix: false,
        dollar_in_ident: false,
        preprocessor: false,
        keywords: &[],
        builtins: &[],
        import_keywords: &[],
    };
    Some(match language {
        Language::Python => Syntax {
            line_comment: "#",
            block_comment: None,
            triple_quotes: true,
            string_prefixes: &["r", "u", "b", "f", "br", "rb", "fr", "rf"],
            prefixes_case_insensitive: true,
            keywords: PY_KEYWORDS,
            builtins: PY_BUILTINS,
            import_keywords: &["import", "from"],
            ..base
        },
        Language::Java => Syntax {
            triple_quotes: true,
            dollar_in_ident: true,
            keywords: JAVA_KEYWORDS,
            builtins: JAVA_BUILTINS,
            import_keywords: &["import", "package"],
            ..base
        },
        Language::C => Syntax {
            string_prefixes: &["L", "u", "U", "u8"],
            preprocessor: true,
            keywords: C_KEYWORDS,
            builtins: C_BUILTINS,
            ..base
        },
        Language::Cpp => Syntax {
            string_prefixes: &["L", "u", "U", "u8"],
            raw_string_prefix: true,
            preprocessor: true,
            keywords: CPP_KEYWORDS,
            builtins: CPP_BUILTINS,
            import_keywords: &["using"],
            ..base
        },
        Language::Javascript => Syntax {
            quotes: &['"', '\'', '`'],
            dollar_in_ident: true,
            keywords: JS_KEYWORDS,
            builtins: JS_BUILTINS,
            import_keywords: &["import"],
            ..base
        },
        Language::Go => Syntax {
            quotes: &['"', '\'', '`'],
            raw_backtick: true,
            keywords: GO_KEYWORDS,
            builtins: GO_BUILTINS,
            import_keywords: &["import", "package"],
            ..base
        },
        Language::Text => return None,
    })
}

pub(crate) fn syntax_for(language: Language) -> Result<Syntax, UnsupportedLanguage> {
    syntax(language).ok_or(UnsupportedLanguage(language))
}

// Longest first so maximal munch works with a linear scan.
const OPERATORS: &[&str] = &[
    ">>>=", "**=", "//=", ">>=", "<<=", "...", "===", "!==", ">>>", "<=>", "->", "=>", "==", "!=",
    "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
    "**", "//", "::", ":=", "<-", "?.", "??",
];
const OPERATOR_CHARS: &str = "+-*/%=<>!&|^~?@";

/// Splits `source` into classified tokens.
pub fn tokenize_code(source: &str, language: Language) -> Result<Vec<CodeToken>, UnsupportedLanguage> {
    let syntax = syntax_for(language)?;
    Ok(Lexer {
        src: source,
        pos: 0,
        syntax: &syntax,
        tokens: Vec::new(),
        line_start: true,
    }
    .run())
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    syntax: &'a Syntax,
    tokens: Vec<CodeToken>,
    /// Only whitespace seen since the last newline (for preprocessor lines).
    line_start: bool,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_nth(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn emit(&mut self, kind: TokenKind, start: usize) {
        let text = &self.src[start..self.pos];
        if kind != TokenKind::Whitespace {
            self.line_start = false;
        } else if text.contains('\n') {
            self.line_start = true;
        }
        self.tokens.push(CodeToken {
            kind,
            text: text.to_string(),
            span: start..self.pos,
        });
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn bump_while(&mut self, pred: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn is_ident_start(&self, c: char) -> bool {
        c == '_' || c.is_alphabetic() || (self.syntax.dollar_in_ident && c == '$')
    }

    fn run(mut self) -> Vec<CodeToken> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            let rest = self.rest();
            if c.is_whitespace() {
                self.bump_while(char::is_whitespace);
                self.emit(TokenKind::Whitespace, start);
            } else if rest.starts_with(self.syntax.line_comment) {
                self.bump_while(|c| c != '\n');
                self.emit(TokenKind::Comment, start);
            } else if let Some((open, close)) = self.syntax.block_comment.filter(|(o, _)| rest.starts_with(o)) {
                self.pos += open.len();
                match self.rest().find(close) {
                    Some(i) => self.pos += i + close.len(),
                    None => self.pos = self.src.len(),
                }
                self.emit(TokenKind::Comment, start);
            } else if c == '#' && self.syntax.preprocessor && self.line_start {
                self.preprocessor_line(start);
            } else if self.syntax.quotes.contains(&c) {
                self.string_body(c);
                self.emit(TokenKind::String, start);
            } else if c.is_ascii_digit() || (c == '.' && self.peek_nth(1).is_some_and(|d| d.is_ascii_digit())) {
                self.number();
                self.emit(TokenKind::Literal, start);
            } else if self.is_ident_start(c) {
                let dollar = self.syntax.dollar_in_ident;
                self.bump_while(|c| c == '_' || c.is_alphanumeric() || (dollar && c == '$'));
                let word = &self.src[start..self.pos];
                if self.try_prefixed_string(word) {
                    self.emit(TokenKind::String, start);
                } else if self.syntax.keywords.contains(&word) {
                    self.emit(TokenKind::Keyword, start);
                } else {
                    self.emit(TokenKind::Identifier, start);
                }
            } else if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                self.pos += op.len();
                self.emit(TokenKind::Operator, start);
            } else if OPERATOR_CHARS.contains(c) {
                self.bump();
                self.emit(TokenKind::Operator, start);
            } else {
                // Brackets, separators and anything unclassified (`\`, stray `$`, symbols).
                self.bump();
                self.emit(TokenKind::Punctuation, start);
            }
        }
        self.tokens
    }

    fn number(&mut self) {
        let start = self.pos;
        let mut prev = '\0';
        while let Some(c) = self.peek() {
            let hex = self.src[start..self.pos].starts_with("0x") || self.src[start..self.pos].starts_with("0X");
            let exponent_sign = (c == '+' || c == '-') && matches!(prev, 'e' | 'E') && !hex;
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exponent_sign {
                // `1..2` ranges and `x.method` on literals stop at the second dot.
                if c == '.' && !self.peek_nth(1).is_some_and(|d| d.is_ascii_digit()) && self.src[start..self.pos].contains('.') {
                    break;
                }
                prev = c;
                self.bump();
            } else {
                break;
            }
        }
    }

    /// Consumes a string opening at the current position (the quote itself included).
    fn string_body(&mut self, quote: char) {
        let triple: String = std::iter::repeat_n(quote, 3).collect();
        if self.syntax.triple_quotes && quote != '`' && self.rest().starts_with(&triple) {
            self.pos += 3;
            loop {
                let rest = self.rest();
                if rest.is_empty() {
                    return;
                }
                if rest.starts_with(&triple) {
                    self.pos += 3;
                    return;
                }
                if rest.starts_with('\\') {
                    self.bump();
                }
                self.bump();
            }
        }
        self.bump();
        let multiline = quote == '`';
        let escapes = !(quote == '`' && self.syntax.raw_backtick);
        while let Some(c) = self.peek() {
            if c == quote {
                self.bump();
                return;
            }
            if c == '\n' && !multiline {
                return;
            }
            self.bump();
            // An escaped newline continues the string onto the next line.
            if c == '\\' && escapes {
                self.bump();
            }
        }
    }

    /// `word` has already been consumed; when it is a string prefix directly
    /// followed by a quote, consume the string too.
    fn try_prefixed_string(&mut self, word: &str) -> bool {
        let Some(next) = self.peek() else { return false };
        if self.syntax.raw_string_prefix && next == '"' && word.ends_with('R') {
            let base = &word[..word.len() - 1];
            if base.is_empty() || self.syntax.string_prefixes.contains(&base) {
                self.cpp_raw_string();
                return true;
            }
        }
        if !self.syntax.quotes.contains(&next) || next == '`' {
            return false;
        }
        let matches = if self.syntax.prefixes_case_insensitive {
            let lower = word.to_ascii_lowercase();
            self.syntax.string_prefixes.contains(&lower.as_str())
        } else {
            self.syntax.string_prefixes.contains(&word)
        };
        if matches {
            self.string_body(next);
        }
        matches
    }

    /// `R"delim( ... )delim"`
    fn cpp_raw_string(&mut self) {
        self.bump(); // "
        let rest = self.rest();
        let Some(open) = rest.find('(') else {
            self.bump_while(|c| c != '\n');
            return;
        };
        let delim = &rest[..open];
        let terminator = format!("){delim}\"");
        self.pos += open + 1;
        match self.rest().find(&terminator) {
            Some(i) => self.pos += i + terminator.len(),
            None => self.pos = self.src.len(),
        }
    }

    fn preprocessor_line(&mut self, start: usize) {
        self.bump(); // #
        self.bump_while(|c| c == ' ' || c == '\t');
        self.bump_while(|c| c.is_ascii_alphabetic());
        let directive = self.src[start..self.pos].trim_start_matches('#').trim().to_string();
        self.emit(TokenKind::Keyword, start);
        if directive == "include" || directive == "import" {
            let ws = self.pos;
            self.bump_while(|c| c == ' ' || c == '\t');
            if self.pos > ws {
                self.emit(TokenKind::Whitespace, ws);
            }
            if self.peek() == Some('<') {
                let s = self.pos;
                self.bump_while(|c| c != '>' && c != '\n');
                if self.peek() == Some('>') {
                    self.bump();
                }
                self.emit(TokenKind::String, s);
            }
        }
    }
}
