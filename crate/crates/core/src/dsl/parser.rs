use super::ast::{Identifier, MultiModalText, Node, RequirementDoc, Scenario, Step};
use super::lexer::{Lexer, Token, TokenKind};
use super::ParseError;

/// Nesting bound for `children` blocks; keeps recursion bounded on hostile input.
pub const MAX_DEPTH: usize = 128;

pub(crate) struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Self {
            tokens: Lexer::new(src).tokenize()?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let token = self.tokens[self.pos].clone();
        if token.kind != TokenKind::Eof {
            self.pos += 1;
        }
        token
    }

    fn fail<T>(&self, production: &'static str, expected: &str) -> Result<T, ParseError> {
        let token = self.peek();
        Err(ParseError {
            line: token.line,
            column: token.column,
            production,
            message: format!("expected {expected}, found {}", token.kind.describe()),
        })
    }

    fn at_word(&self, word: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Word(w) if w == word)
    }

    fn expect(&mut self, kind: TokenKind, production: &'static str) -> Result<(), ParseError> {
        if self.peek().kind == kind {
            self.next();
            Ok(())
        } else {
            self.fail(production, &kind.describe())
        }
    }

    fn keyword(&mut self, word: &str, production: &'static str) -> Result<(), ParseError> {
        if self.at_word(word) {
            self.next();
            Ok(())
        } else {
            self.fail(production, &format!("`{word}`"))
        }
    }

    fn field(&mut self, word: &str, production: &'static str) -> Result<(), ParseError> {
        self.keyword(word, production)?;
        self.expect(TokenKind::Colon, production)
    }

    fn identifier(&mut self, production: &'static str) -> Result<Identifier, ParseError> {
        match &self.peek().kind {
            TokenKind::Word(w) => {
                let id = Identifier::new(w.clone()).map_err(|e| ParseError {
                    line: self.peek().line,
                    column: self.peek().column,
                    production,
                    message: e.to_string(),
                })?;
                self.next();
                Ok(id)
            }
            _ => self.fail(production, "identifier"),
        }
    }

    fn string(&mut self, production: &'static str) -> Result<String, ParseError> {
        match &self.peek().kind {
            TokenKind::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.fail(production, "string literal"),
        }
    }

    fn id_list(&mut self) -> Result<Vec<Identifier>, ParseError> {
        const P: &str = "IdList";
        self.expect(TokenKind::LBracket, P)?;
        let mut ids = Vec::new();
        if self.peek().kind == TokenKind::RBracket {
            self.next();
            return Ok(ids);
        }
        loop {
            ids.push(self.identifier(P)?);
            match self.peek().kind {
                TokenKind::Comma => {
                    self.next();
                }
                TokenKind::RBracket => {
                    self.next();
                    return Ok(ids);
                }
                _ => return self.fail(P, "`,` or `]`"),
            }
        }
    }

    pub(crate) fn document(&mut self) -> Result<RequirementDoc, ParseError> {
        let root = self.node(0)?;
        if self.peek().kind != TokenKind::Eof {
            return self.fail("RequirementDoc", "end of input (a document has exactly one root node)");
        }
        Ok(RequirementDoc::new(root))
    }

    fn node(&mut self, depth: usize) -> Result<Node, ParseError> {
        const P: &str = "Node";
        if depth > MAX_DEPTH {
            return self.fail(P, &format!("at most {MAX_DEPTH} levels of nesting"));
        }
        self.keyword("node", P)?;
        let id = self.identifier(P)?;
        let name = self.string(P)?;
        let mut node = Node::new(id, name);
        self.expect(TokenKind::LBrace, P)?;

        self.field("description", P)?;
        node.description = MultiModalText::parse(&self.string("MultiModalText")?);
        if self.at_word("dependencies") {
            self.field("dependencies", P)?;
            node.dependencies = self.id_list()?;
        }
        while self.at_word("scenario") {
            node.scenarios.push(self.scenario()?);
        }
        if self.at_word("children") {
            self.next();
            self.expect(TokenKind::LBrace, P)?;
            while self.at_word("node") {
                node.children.push(self.node(depth + 1)?);
            }
            self.expect(TokenKind::RBrace, P)?;
        }
        if self.peek().kind != TokenKind::RBrace {
            return self.fail(P, "`dependencies`, `scenario`, `children` (in that order) or `}`");
        }
        self.next();
        Ok(node)
    }

    fn scenario(&mut self) -> Result<Scenario, ParseError> {
        const P: &str = "Scenario";
        self.keyword("scenario", P)?;
        let id = self.identifier(P)?;
        let name = self.string(P)?;
        self.expect(TokenKind::LBrace, P)?;
        let mut prerequisites = Vec::new();
        if self.at_word("prerequisites") {
            self.field("prerequisites", P)?;
            prerequisites = self.id_list()?;
        }
        let mut steps = Vec::new();
        while self.at_word("step") {
            steps.push(self.step()?);
        }
        if self.peek().kind != TokenKind::RBrace {
            return self.fail(P, "`prerequisites`, `step` or `}`");
        }
        self.next();
        Ok(Scenario {
            id,
            name,
            prerequisites,
            steps,
        })
    }

    fn step(&mut self) -> Result<Step, ParseError> {
        const P: &str = "Step";
        self.keyword("step", P)?;
        self.expect(TokenKind::LBrace, P)?;
        self.field("given", P)?;
        let given = self.string(P)?;
        self.field("when", P)?;
        let when = self.string(P)?;
        self.field("then", P)?;
        let then = self.string(P)?;
        self.expect(TokenKind::RBrace, P)?;
        Ok(Step { given, when, then })
    }
}
