use roxmltree::{Document, Node};

use super::xml::{attr, escape_text, is_xml_char};
use super::{
    decode_base64, encode_base64, is_valid_operation, Body, EnvelopeError, Fault, FaultCode, MessagePayload,
    SoapEnvelope, COMPRESSION_ALGORITHM, CMX_NS, DEFAULT_CONTENT_TYPE, SOAP_ENV_NS,
};

const PROLOG: &str = "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";

/// A consumer's call: which operation, and the correlation id for timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoapRequest {
    pub operation: String,
    pub transaction_id: Option<u64>,
}

impl SoapRequest {
    pub fn new(operation: impl Into<String>) -> Self {
        Self { operation: operation.into(), transaction_id: None }
    }

    pub fn with_transaction_id(mut self, id: u64) -> Self {
        self.transaction_id = Some(id);
        self
    }
}

fn open_envelope(out: &mut String) {
    out.push_str(PROLOG);
    out.push_str("<soap:Envelope xmlns:soap=\"");
    out.push_str(SOAP_ENV_NS);
    out.push_str("\" xmlns:cmx=\"");
    out.push_str(CMX_NS);
    out.push_str("\">");
}

fn check_operation(op: &str) -> Result<(), EnvelopeError> {
    if is_valid_operation(op) {
        Ok(())
    } else {
        Err(EnvelopeError::InvalidOperation(op.to_string()))
    }
}

/// Fails unless `bytes` is UTF-8 made only of XML characters, i.e. can be
/// carried in a plain `cmx:Payload`.
pub fn check_representable(bytes: &[u8]) -> Result<(), EnvelopeError> {
    payload_text(bytes).map(|_| ())
}

fn payload_text(bytes: &[u8]) -> Result<&str, EnvelopeError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| EnvelopeError::UnrepresentablePayload { position: e.valid_up_to() })?;
    if let Some((position, _)) = text.char_indices().find(|(_, c)| !is_xml_char(*c)) {
        return Err(EnvelopeError::UnrepresentablePayload { position });
    }
    Ok(text)
}

/// Serializes `envelope` to SOAP 1.1 XML.
///
/// Output is fully determined by the envelope: fixed prefixes (`soap`,
/// `cmx`), fixed element order, no insignificant whitespace.
pub fn build_envelope(envelope: &SoapEnvelope) -> Result<String, EnvelopeError> {
    if let Some(op) = envelope.operation() {
        check_operation(op)?;
    }
    let mut out = String::with_capacity(512);
    open_envelope(&mut out);

    out.push_str("<soap:Header><cmx:Compressed>");
    out.push_str(if envelope.is_compressed() { "true" } else { "false" });
    out.push_str("</cmx:Compressed>");
    if let Some(op) = envelope.operation() {
        out.push_str("<cmx:Operation>");
        out.push_str(op);
        out.push_str("</cmx:Operation>");
    }
    if let Some(id) = envelope.transaction_id() {
        out.push_str(&format!("<cmx:TransactionId>{id}</cmx:TransactionId>"));
    }
    out.push_str("</soap:Header><soap:Body>");

    match envelope.body() {
        Body::Plain(payload) => {
            let text = payload_text(payload.bytes())?;
            out.push_str("<cmx:Payload contentType=\"");
            out.push_str(&attr(payload.content_type()));
            out.push_str("\">");
            escape_text(text, &mut out);
            out.push_str("</cmx:Payload>");
        }
        Body::Compressed { block, original_size } => {
            out.push_str(&format!(
                "<cmx:CompressedPayload encoding=\"base64\" algorithm=\"{COMPRESSION_ALGORITHM}\" originalSize=\"{original_size}\">"
            ));
            out.push_str(&encode_base64(block));
            out.push_str("</cmx:CompressedPayload>");
        }
        Body::Fault(fault) => {
            if fault.reason.chars().any(|c| !is_xml_char(c)) {
                return Err(EnvelopeError::InvalidParts("fault reason contains non-XML characters".into()));
            }
            out.push_str("<soap:Fault><faultcode>soap:");
            out.push_str(fault.code.as_str());
            out.push_str("</faultcode><faultstring>");
            escape_text(&fault.reason, &mut out);
            out.push_str("</faultstring></soap:Fault>");
        }
    }
    out.push_str("</soap:Body></soap:Envelope>");
    Ok(out)
}

/// Serializes a request envelope whose body is the empty operation element.
pub fn build_request(request: &SoapRequest) -> Result<String, EnvelopeError> {
    check_operation(&request.operation)?;
    let mut out = String::with_capacity(320);
    open_envelope(&mut out);
    out.push_str("<soap:Header>");
    if let Some(id) = request.transaction_id {
        out.push_str(&format!("<cmx:TransactionId>{id}</cmx:TransactionId>"));
    }
    out.push_str("</soap:Header><soap:Body><cmx:");
    out.push_str(&request.operation);
    out.push_str("/></soap:Body></soap:Envelope>");
    Ok(out)
}

fn is(node: &Node, ns: &str, local: &str) -> bool {
    node.is_element() && node.tag_name().namespace() == Some(ns) && node.tag_name().name() == local
}

fn qualified(node: &Node) -> String {
    match node.tag_name().namespace() {
        Some(ns) => format!("{{{ns}}}{}", node.tag_name().name()),
        None => node.tag_name().name().to_string(),
    }
}

fn text_of(node: &Node) -> String {
    node.children().filter(|c| c.is_text()).filter_map(|c| c.text()).collect()
}

struct Parts<'a, 'input> {
    header: Option<Node<'a, 'input>>,
    body: Node<'a, 'input>,
}

/// Locates Header and Body under a SOAP 1.1 Envelope root.
fn split_envelope<'a, 'input>(doc: &'a Document<'input>) -> Result<Parts<'a, 'input>, EnvelopeError> {
    let root = doc.root_element();
    if !is(&root, SOAP_ENV_NS, "Envelope") {
        return Err(EnvelopeError::MissingElement("Envelope"));
    }
    let mut header = None;
    let mut body = None;
    for child in root.children().filter(|c| c.is_element()) {
        if is(&child, SOAP_ENV_NS, "Header") && header.is_none() && body.is_none() {
            header = Some(child);
        } else if is(&child, SOAP_ENV_NS, "Body") && body.is_none() {
            body = Some(child);
        } else {
            return Err(EnvelopeError::UnexpectedElement(qualified(&child)));
        }
    }
    let body = body.ok_or(EnvelopeError::MissingElement("Body"))?;
    Ok(Parts { header, body })
}

fn single_body_element<'a, 'input>(body: Node<'a, 'input>) -> Result<Node<'a, 'input>, EnvelopeError> {
    let mut elements = body.children().filter(|c| c.is_element());
    let first = elements.next().ok_or(EnvelopeError::MissingElement("Body content"))?;
    if let Some(extra) = elements.next() {
        return Err(EnvelopeError::UnexpectedElement(qualified(&extra)));
    }
    Ok(first)
}

fn header_field<'a, 'input>(header: Option<Node<'a, 'input>>, local: &str) -> Option<Node<'a, 'input>> {
    header?.children().find(|c| is(c, CMX_NS, local))
}

fn parse_transaction_id(header: Option<Node>) -> Result<Option<u64>, EnvelopeError> {
    header_field(header, "TransactionId")
        .map(|n| {
            let text = text_of(&n);
            text.trim()
                .parse()
                .map_err(|_| EnvelopeError::InvalidAttribute { name: "TransactionId", value: text })
        })
        .transpose()
}

fn parse_fault(node: Node) -> Result<Fault, EnvelopeError> {
    let code_node = node
        .children()
        .find(|c| c.is_element() && c.tag_name().name() == "faultcode")
        .ok_or(EnvelopeError::MissingElement("faultcode"))?;
    let code_text = text_of(&code_node);
    let code = FaultCode::parse(&code_text)
        .ok_or(EnvelopeError::InvalidAttribute { name: "faultcode", value: code_text })?;
    let reason = node
        .children()
        .find(|c| c.is_element() && c.tag_name().name() == "faultstring")
        .map(|n| text_of(&n))
        .unwrap_or_default();
    Ok(Fault { code, reason })
}

/// Parses a response envelope. A SOAP Fault is a successful parse whose
/// body is [`Body::Fault`].
pub fn parse_envelope(xml: &str) -> Result<SoapEnvelope, EnvelopeError> {
    let doc = Document::parse(xml).map_err(|e| EnvelopeError::NotXml(e.to_string()))?;
    let Parts { header, body } = split_envelope(&doc)?;

    let operation = header_field(header, "Operation").map(|n| text_of(&n).trim().to_string());
    let transaction_id = parse_transaction_id(header)?;
    let compressed_flag = match header_field(header, "Compressed") {
        None => None,
        Some(n) => match text_of(&n).trim() {
            "true" | "1" => Some(true),
            "false" | "0" => Some(false),
            other => return Err(EnvelopeError::InvalidAttribute { name: "Compressed", value: other.to_string() }),
        },
    };

    let content = single_body_element(body)?;
    let body = if is(&content, SOAP_ENV_NS, "Fault") {
        Body::Fault(parse_fault(content)?)
    } else if is(&content, CMX_NS, "Payload") {
        let content_type = content.attribute("contentType").unwrap_or(DEFAULT_CONTENT_TYPE);
        let payload = MessagePayload::new(text_of(&content).into_bytes(), content_type)
            .map_err(|_| EnvelopeError::InvalidAttribute { name: "contentType", value: content_type.into() })?;
        Body::Plain(payload)
    } else if is(&content, CMX_NS, "CompressedPayload") {
        let encoding = content.attribute("encoding").unwrap_or("base64");
        if encoding != "base64" {
            return Err(EnvelopeError::InvalidAttribute { name: "encoding", value: encoding.into() });
        }
        let algorithm = content.attribute("algorithm").unwrap_or(COMPRESSION_ALGORITHM);
        if algorithm != COMPRESSION_ALGORITHM {
            return Err(EnvelopeError::InvalidAttribute { name: "algorithm", value: algorithm.into() });
        }
        let size_text = content.attribute("originalSize").ok_or(EnvelopeError::MissingElement("originalSize"))?;
        let original_size = size_text
            .trim()
            .parse()
            .map_err(|_| EnvelopeError::InvalidAttribute { name: "originalSize", value: size_text.into() })?;
        let text = text_of(&content);
        let block = decode_base64(text.trim())?;
        Body::Compressed { block, original_size }
    } else {
        return Err(EnvelopeError::UnknownBodyElement(qualified(&content)));
    };

    match (&body, compressed_flag) {
        (Body::Fault(_), _) => {}
        (_, None) => return Err(EnvelopeError::MissingElement("Compressed")),
        (b, Some(flag)) if flag != matches!(b, Body::Compressed { .. }) => {
            return Err(EnvelopeError::Inconsistent(format!(
                "header says Compressed={flag} but body carries {}",
                if flag { "a plain payload" } else { "a compressed payload" }
            )));
        }
        _ => {}
    }

    Ok(SoapEnvelope { operation, transaction_id, body })
}

/// Parses a request envelope: the operation is the single Body element.
pub fn parse_request(xml: &str) -> Result<SoapRequest, EnvelopeError> {
    let doc = Document::parse(xml).map_err(|e| EnvelopeError::NotXml(e.to_string()))?;
    let Parts { header, body } = split_envelope(&doc)?;
    let transaction_id = parse_transaction_id(header)?;
    let content = single_body_element(body)?;
    if content.tag_name().namespace() != Some(CMX_NS) {
        return Err(EnvelopeError::UnknownBodyElement(qualified(&content)));
    }
    Ok(SoapRequest { operation: content.tag_name().name().to_string(), transaction_id })
}
