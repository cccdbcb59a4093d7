#include "dupnp/xml.hpp"

#include <algorithm>
#include <cctype>

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"

namespace dupnp::xml {

std::string_view Element::local_name() const {
    size_t colon = name.rfind(':');
    if (colon == std::string::npos) return name;
    return std::string_view(name).substr(colon + 1);
}

const std::string* Element::attribute(std::string_view attr_name) const {
    for (const auto& [k, v] : attributes) {
        if (k == attr_name) return &v;
    }
    return nullptr;
}

const Element* Element::child(std::string_view local) const {
    for (const auto& c : children) {
        if (c.local_name() == local) return &c;
    }
    return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view local) const {
    std::vector<const Element*> out;
    for (const auto& c : children) {
        if (c.local_name() == local) out.push_back(&c);
    }
    return out;
}

std::string Element::child_text(std::string_view local) const {
    const Element* c = child(local);
    return c ? c->text : std::string();
}

std::string Element::own_namespace() const {
    size_t colon = name.rfind(':');
    std::string decl = colon == std::string::npos
                           ? "xmlns"
                           : "xmlns:" + name.substr(0, colon);
    const std::string* ns = attribute(decl);
    return ns ? *ns : std::string();
}

std::string escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out.push_back(c); break;
        }
    }
    return out;
}

static void append_decoded_entity(std::string_view ent, std::string& out) {
    // ent excludes '&' and ';'
    if (ent == "amp") out.push_back('&');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (!ent.empty() && ent[0] == '#') {
        long code = 0;
        bool ok = false;
        if (ent.size() > 2 && (ent[1] == 'x' || ent[1] == 'X')) {
            for (size_t i = 2; i < ent.size(); ++i) {
                char c = ent[i];
                int v = (c >= '0' && c <= '9')   ? c - '0'
                        : (c >= 'a' && c <= 'f') ? c - 'a' + 10
                        : (c >= 'A' && c <= 'F') ? c - 'A' + 10
                                                 : -1;
                if (v < 0) { ok = false; break; }
                code = code * 16 + v;
                ok = true;
            }
        } else {
            for (size_t i = 1; i < ent.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(ent[i]))) { ok = false; break; }
                code = code * 10 + (ent[i] - '0');
                ok = true;
            }
        }
        if (ok && code > 0 && code < 0x110000) {
            // UTF-8 encode
            if (code < 0x80) {
                out.push_back(static_cast<char>(code));
            } else if (code < 0x800) {
                out.push_back(static_cast<char>(0xc0 | (code >> 6)));
                out.push_back(static_cast<char>(0x80 | (code & 0x3f)));
            } else if (code < 0x10000) {
                out.push_back(static_cast<char>(0xe0 | (code >> 12)));
                out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3f)));
                out.push_back(static_cast<char>(0x80 | (code & 0x3f)));
            } else {
                out.push_back(static_cast<char>(0xf0 | (code >> 18)));
                out.push_back(static_cast<char>(0x80 | ((code >> 12) & 0x3f)));
                out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3f)));
                out.push_back(static_cast<char>(0x80 | (code & 0x3f)));
            }
        } else {
            out.push_back('&');
            out.append(ent);
            out.push_back(';');
        }
    } else {
        // Unknown entity: keep it literally rather than failing; honeypot
        // inputs are not guaranteed to be well-formed.
        out.push_back('&');
        out.append(ent);
        out.push_back(';');
    }
}

std::string unescape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '&') {
            out.push_back(text[i]);
            continue;
        }
        size_t semi = text.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back('&');
            continue;
        }
        append_decoded_entity(text.substr(i + 1, semi - i - 1), out);
        i = semi;
    }
    return out;
}

namespace {

class Parser {
public:
    explicit Parser(std::string_view in) : m_in(in) {}

    Element parse_document() {
        skip_prolog();
        if (m_pos >= m_in.size() || m_in[m_pos] != '<')
            fail("expected root element");
        Element root = parse_element(0);
        skip_misc();
        if (m_pos != m_in.size()) fail("trailing content after root element");
        return root;
    }

private:
    static constexpr int k_max_depth = 200;

    std::string_view m_in;
    size_t m_pos = 0;

    [[noreturn]] void fail(const std::string& what) {
        throw Error(Errc::xml_syntax, what + " at offset " + std::to_string(m_pos));
    }

    bool starts_with(std::string_view s) const {
        return m_in.substr(m_pos, s.size()) == s;
    }

    void skip_ws() {
        while (m_pos < m_in.size() && std::isspace(static_cast<unsigned char>(m_in[m_pos])))
            ++m_pos;
    }

    void skip_until(std::string_view terminator, const char* what) {
        size_t end = m_in.find(terminator, m_pos);
        if (end == std::string_view::npos) fail(std::string("unterminated ") + what);
        m_pos = end + terminator.size();
    }

    void skip_prolog() {
        // BOM
        if (m_in.substr(0, 3) == "\xef\xbb\xbf") m_pos = 3;
        skip_misc();
    }

    void skip_misc() {
        while (true) {
            skip_ws();
            if (starts_with("<?")) {
                skip_until("?>", "processing instruction");
            } else if (starts_with("<!--")) {
                skip_until("-->", "comment");
            } else if (starts_with("<!")) {
                skip_until(">", "doctype");
            } else {
                return;
            }
        }
    }

    static bool is_name_char(char c) {
        return !(c == '>' || c == '/' || c == '=' ||
                 std::isspace(static_cast<unsigned char>(c)));
    }

    std::string parse_name() {
        size_t start = m_pos;
        while (m_pos < m_in.size() && is_name_char(m_in[m_pos])) ++m_pos;
        if (m_pos == start) fail("expected name");
        return std::string(m_in.substr(start, m_pos - start));
    }

    Element parse_element(int depth) {
        if (depth > k_max_depth) fail("document too deeply nested");
        if (m_in[m_pos] != '<') fail("expected '<'");
        ++m_pos;
        Element e;
        e.name = parse_name();
        // attributes
        while (true) {
            skip_ws();
            if (m_pos >= m_in.size()) fail("unterminated start tag");
            if (m_in[m_pos] == '>') {
                ++m_pos;
                break;
            }
            if (starts_with("/>")) {
                m_pos += 2;
                return e;
            }
            std::string attr = parse_name();
            skip_ws();
            if (m_pos >= m_in.size() || m_in[m_pos] != '=') fail("expected '=' in attribute");
            ++m_pos;
            skip_ws();
            if (m_pos >= m_in.size() || (m_in[m_pos] != '"' && m_in[m_pos] != '\''))
                fail("expected quoted attribute value");
            char quote = m_in[m_pos++];
            size_t end = m_in.find(quote, m_pos);
            if (end == std::string_view::npos) fail("unterminated attribute value");
            e.attributes.emplace_back(std::move(attr),
                                      unescape(m_in.substr(m_pos, end - m_pos)));
            m_pos = end + 1;
        }
        parse_content(e, depth);
        return e;
    }

    void parse_content(Element& e, int depth) {
        std::string text;
        while (true) {
            if (m_pos >= m_in.size()) fail("unterminated element <" + e.name + ">");
            if (m_in[m_pos] != '<') {
                size_t lt = m_in.find('<', m_pos);
                if (lt == std::string_view::npos) fail("unterminated element <" + e.name + ">");
                text += unescape(m_in.substr(m_pos, lt - m_pos));
                m_pos = lt;
                continue;
            }
            if (starts_with("</")) {
                m_pos += 2;
                std::string close = parse_name();
                if (close != e.name)
                    fail("mismatched end tag </" + close + "> for <" + e.name + ">");
                skip_ws();
                if (m_pos >= m_in.size() || m_in[m_pos] != '>') fail("malformed end tag");
                ++m_pos;
                e.text = std::move(text);
                return;
            }
            if (starts_with("<!--")) {
                skip_until("-->", "comment");
            } else if (starts_with("<![CDATA[")) {
                m_pos += 9;
                size_t end = m_in.find("]]>", m_pos);
                if (end == std::string_view::npos) fail("unterminated CDATA");
                text += std::string(m_in.substr(m_pos, end - m_pos));
                m_pos = end + 3;
            } else if (starts_with("<?")) {
                skip_until("?>", "processing instruction");
            } else {
                e.children.push_back(parse_element(depth + 1));
            }
        }
    }
};

} // namespace

Element parse(std::string_view bytes) {
    return Parser(bytes).parse_document();
}

void serialize_into(const Element& e, std::string& out, int indent) {
    out.push_back('<');
    out += e.name;
    for (const auto& [k, v] : e.attributes) {
        out.push_back(' ');
        out += k;
        out += "=\"";
        out += escape(v);
        out.push_back('"');
    }
    if (e.text.empty() && e.children.empty()) {
        out += "/>";
        return;
    }
    out.push_back('>');
    if (!e.text.empty()) out += escape(e.text);
    if (!e.children.empty()) {
        for (const auto& c : e.children) {
            out.push_back('\n');
            out.append(static_cast<size_t>(indent + 2), ' ');
            serialize_into(c, out, indent + 2);
        }
        out.push_back('\n');
        out.append(static_cast<size_t>(indent), ' ');
    }
    out += "</";
    out += e.name;
    out.push_back('>');
}

std::string serialize(const Element& root, bool with_declaration) {
    std::string out;
    if (with_declaration) out += "<?xml version=\"1.0\"?>\n";
    serialize_into(root, out, 0);
    out.push_back('\n');
    return out;
}

static bool is_all_whitespace(std::string_view s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

bool structurally_equal(const Element& a, const Element& b) {
    if (a.name != b.name) return false;
    auto attrs_a = a.attributes;
    auto attrs_b = b.attributes;
    std::sort(attrs_a.begin(), attrs_a.end());
    std::sort(attrs_b.begin(), attrs_b.end());
    if (attrs_a != attrs_b) return false;
    if (a.children.size() != b.children.size()) return false;
    if (a.children.empty()) {
        if (a.text != b.text) return false;
    } else {
        // Text around child elements is formatting, unless someone put real
        // data there on both sides.
        bool ws_a = is_all_whitespace(a.text);
        bool ws_b = is_all_whitespace(b.text);
        if (ws_a != ws_b) return false;
        if (!ws_a && trim(a.text) != trim(b.text)) return false;
    }
    for (size_t i = 0; i < a.children.size(); ++i) {
        if (!structurally_equal(a.children[i], b.children[i])) return false;
    }
    return true;
}

} // namespace dupnp::xml
