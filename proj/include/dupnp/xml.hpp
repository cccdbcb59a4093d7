#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dupnp::xml {

// Small DOM good enough for UPnP documents: an element holds attributes,
// child elements and its directly-contained character data. Interleaved
// text/element content collapses to "text then children", which every
// UPnP description and SOAP envelope in the wild satisfies.
struct Element {
    std::string name; // as written, possibly prefixed ("u:Envelope")
    std::vector<std::pair<std::string, std::string>> attributes;
    std::string text; // concatenated character data, entities decoded
    std::vector<Element> children;

    std::string_view local_name() const;
    const std::string* attribute(std::string_view name) const;
    const Element* child(std::string_view local) const;
    std::vector<const Element*> children_named(std::string_view local) const;
    std::string child_text(std::string_view local) const; // "" when absent

    // Namespace URI of this element's prefix, resolved against xmlns
    // attributes declared on the element itself.
    std::string own_namespace() const;
};

// Throws Error{xml_syntax} on malformed input.
Element parse(std::string_view bytes);

std::string serialize(const Element& root, bool with_declaration = true);
void serialize_into(const Element& e, std::string& out, int indent);

std::string escape(std::string_view text);
std::string unescape(std::string_view text);

// Name match, attribute-set match (order-insensitive), recursive child
// match; character data compared exactly on leaves and ignored when it is
// pure whitespace around child elements.
bool structurally_equal(const Element& a, const Element& b);

} // namespace dupnp::xml
