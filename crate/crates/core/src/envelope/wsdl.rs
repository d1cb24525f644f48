use url::Url;

use super::xml::attr;
use super::{is_valid_operation, EnvelopeError};

/// What the WSDL document describes: one service, one endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDescriptor {
    service_name: String,
    endpoint_url: String,
    operations: Vec<String>,
}

impl ServiceDescriptor {
    pub fn new(
        service_name: impl Into<String>,
        endpoint_url: impl Into<String>,
        operations: Vec<String>,
    ) -> Result<Self, EnvelopeError> {
        let service_name = service_name.into();
        let endpoint_url = endpoint_url.into();
        if !crate::is_valid_service_name(&service_name) {
            return Err(EnvelopeError::InvalidDescriptor(format!("invalid service name {service_name:?}")));
        }
        if Url::parse(&endpoint_url).is_err() {
            return Err(EnvelopeError::InvalidDescriptor(format!("endpoint {endpoint_url:?} is not an absolute URL")));
        }
        if operations.is_empty() {
            return Err(EnvelopeError::InvalidDescriptor("at least one operation is required".into()));
        }
        for (i, op) in operations.iter().enumerate() {
            if !is_valid_operation(op) {
                return Err(EnvelopeError::InvalidOperation(op.clone()));
            }
            if operations[..i].contains(op) {
                return Err(EnvelopeError::InvalidDescriptor(format!("operation {op} listed twice")));
            }
        }
        Ok(Self { service_name, endpoint_url, operations })
    }

    pub fn service_name(&self) -> &str {
        &self.service_name
    }

    pub fn endpoint_url(&self) -> &str {
        &self.endpoint_url
    }

    pub fn operations(&self) -> &[String] {
        &self.operations
    }
}

/// Renders a WSDL 1.1 document with a document/literal SOAP binding.
pub fn generate_wsdl(desc: &ServiceDescriptor) -> String {
    let name = desc.service_name();
    let tns = format!("urn:cmx:{name}");
    let mut out = String::with_capacity(2048);
    let mut line = |depth: usize, s: &str| {
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push_str(s);
        out.push('\n');
    };

    line(0, "<?xml version=\"1.0\" encoding=\"utf-8\"?>");
    line(
        0,
        &format!(
            "<wsdl:definitions name=\"{name}\" targetNamespace=\"{tns}\" \
             xmlns:wsdl=\"http://schemas.xmlsoap.org/wsdl/\" \
             xmlns:soap=\"http://schemas.xmlsoap.org/wsdl/soap/\" \
             xmlns:xsd=\"http://www.w3.org/2001/XMLSchema\" \
             xmlns:tns=\"{tns}\">"
        ),
    );
    for op in desc.operations() {
        line(1, &format!("<wsdl:message name=\"{op}Request\"/>"));
        line(1, &format!("<wsdl:message name=\"{op}Response\">"));
        line(2, "<wsdl:part name=\"payload\" type=\"xsd:string\"/>");
        line(1, "</wsdl:message>");
    }

    line(1, &format!("<wsdl:portType name=\"{name}PortType\">"));
    for op in desc.operations() {
        line(2, &format!("<wsdl:operation name=\"{op}\">"));
        line(3, &format!("<wsdl:input message=\"tns:{op}Request\"/>"));
        line(3, &format!("<wsdl:output message=\"tns:{op}Response\"/>"));
        line(2, "</wsdl:operation>");
    }
    line(1, "</wsdl:portType>");

    line(1, &format!("<wsdl:binding name=\"{name}Binding\" type=\"tns:{name}PortType\">"));
    line(2, "<soap:binding style=\"document\" transport=\"http://schemas.xmlsoap.org/soap/http\"/>");
    for op in desc.operations() {
        line(2, &format!("<wsdl:operation name=\"{op}\">"));
        line(3, &format!("<soap:operation soapAction=\"urn:cmx:{name}#{op}\"/>"));
        line(3, "<wsdl:input><soap:body use=\"literal\"/></wsdl:input>");
        line(3, "<wsdl:output><soap:body use=\"literal\"/></wsdl:output>");
        line(2, "</wsdl:operation>");
    }
    line(1, "</wsdl:binding>");

    line(1, &format!("<wsdl:service name=\"{name}\">"));
    line(2, &format!("<wsdl:port name=\"{name}Port\" binding=\"tns:{name}Binding\">"));
    line(3, &format!("<soap:address location=\"{}\"/>", attr(desc.endpoint_url())));
    line(2, "</wsdl:port>");
    line(1, "</wsdl:service>");
    line(0, "</wsdl:definitions>");
    out
}
