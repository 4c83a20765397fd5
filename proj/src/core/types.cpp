#include "blehop/types.hpp"

#include <cctype>
#include <cstdio>

namespace blehop {

const char* to_string(CsaVersion v) {
    return v == CsaVersion::Csa1 ? "CSA1" : "CSA2";
}

namespace {

std::string parse_message(std::size_t row, std::size_t column, const std::string& reason) {
    std::string msg = "row " + std::to_string(row);
    if (column != 0) msg += ", column " + std::to_string(column);
    return msg + ": " + reason;
}

} // namespace

ParseError::ParseError(std::size_t row, std::size_t column, const std::string& reason)
    : Error(ErrorKind::Parse, parse_message(row, column, reason)), row_(row), column_(column) {}

std::string format_access_address(AccessAddress aa) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", aa.value);
    return buf;
}

AccessAddress parse_access_address(const std::string& text) {
    std::size_t pos = 0;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) pos = 2;
    if (pos == text.size() || text.size() - pos > 8) {
        throw Error(ErrorKind::Parse, "invalid access address '" + text + "'");
    }
    std::uint32_t value = 0;
    for (; pos < text.size(); ++pos) {
        const char c = text[pos];
        if (!std::isxdigit(static_cast<unsigned char>(c))) {
            throw Error(ErrorKind::Parse, "invalid access address '" + text + "'");
        }
        const unsigned digit = std::isdigit(static_cast<unsigned char>(c))
                                   ? static_cast<unsigned>(c - '0')
                                   : static_cast<unsigned>(std::toupper(c) - 'A' + 10);
        value = (value << 4) | digit;
    }
    return AccessAddress{value};
}

} // namespace blehop
