#pragma once

namespace audit::detail {

// Vendored public-suffix snapshot (ICANN section subset), pinned so that
// party attribution is reproducible across machines and time.
inline constexpr const char* kPublicSuffixSnapshot = R"PSL(// VERSION: audit-snapshot-2019-09-25
// Subset of the public suffix list (publicsuffix.org), ICANN section.
// Format: one rule per line; '*' wildcard labels; '!' exception rules.

// Generic top level
com
net
org
edu
gov
mil
int
info
biz
name
pro
mobi
asia
xyz
online
site
app
dev
cloud
io
ai
co
me
tv
cc
ac

// United Kingdom
uk
ac.uk
co.uk
gov.uk
ltd.uk
me.uk
net.uk
nhs.uk
org.uk
plc.uk
police.uk
*.sch.uk

// Japan
jp
ac.jp
ad.jp
co.jp
ed.jp
go.jp
gr.jp
lg.jp
ne.jp
or.jp
kyoto.jp
ide.kyoto.jp
tokyo.jp
*.kobe.jp
!city.kobe.jp

// United States
us
ak.us
k12.ak.us
wa.us
k12.wa.us
ca.us
ny.us

// Cook Islands
*.ck
!www.ck

// Australia
au
com.au
net.au
org.au
edu.au
gov.au

// China
cn
com.cn
net.cn
org.cn
gov.cn

// Brazil
br
com.br
net.br
org.br
gov.br

// India
in
co.in
net.in
org.in

// South Korea
kr
co.kr
or.kr
ne.kr
go.kr
ac.kr

// Mexico
mx
com.mx
org.mx
net.mx

// Argentina
ar
com.ar

// Turkey
tr
com.tr

// South Africa
za
co.za

// New Zealand
nz
co.nz

// Single-level country codes
ca
de
fr
nl
it
es
pt
se
ch
at
be
dk
fi
no
pl
ru
gr
cz
ie
il
)PSL";

} // namespace audit::detail
