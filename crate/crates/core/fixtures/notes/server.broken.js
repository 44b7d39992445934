const http = require('http');

const notes = [];

function page() {
  const items = notes.map((note) => `  <li>${note}</li>`).join('\n');
  return `<!doctype html>
<html>
<head><title>Notes</title></head>
<body>
<h1>Notes</h1>
<form method="post" action="/notes">
  <label for="note">Note</label>
  <input id="note" name="note" type="text">
  <button type="submit">Save</button>
</form>
<ul>
${items}
</ul>
</body>
</html>
`;
}

const server = http.createServer((req, res) => {
  if (req.method === 'POST' && req.url === '/notes') {
    let body = '';
    req.on('data', (chunk) => { body += chunk; });
    req.on('end', () => {
      res.writeHead(200, { 'Content-Type': 'text/html' });
      res.end(page());
    });
    return;
  }
  res.writeHead(200, { 'Content-Type': 'text/html' });
  res.end(page());
});

server.listen(process.env.PORT || 3000);
