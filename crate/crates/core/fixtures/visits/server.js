const http = require('http');

// Counts visits per browser session via a cookie. Used to prove that
// each test case starts from a fresh session: the counter must read 1.
const server = http.createServer((req, res) => {
  const match = /visits=(\d+)/.exec(req.headers.cookie || '');
  const visits = (match ? parseInt(match[1], 10) : 0) + 1;
  res.writeHead(200, {
    'Content-Type': 'text/html',
    'Set-Cookie': `visits=${visits}`,
  });
  res.end(`<!doctype html>
<html>
<head><title>Visits</title></head>
<body>
<h1>Welcome</h1>
<p>Visit count: ${visits}</p>
</body>
</html>
`);
});

server.listen(process.env.PORT || 3000);
