const http = require('http');

const messages = [];

function formFields(body) {
  const fields = {};
  for (const pair of body.split('&')) {
    if (!pair) continue;
    const [key, value] = pair.split('=');
    fields[decodeURIComponent(key)] = decodeURIComponent((value || '').replace(/\+/g, ' '));
  }
  return fields;
}

function page() {
  const items = messages.map((message) => `  <li>${message}</li>`).join('\n');
  return `<!doctype html>
<html>
<head><title>Notice Board</title></head>
<body>
<h1>Notice Board</h1>
<form method="post" action="/">
  <label for="message">Message</label>
  <textarea id="message" name="message"></textarea>
  <button type="submit">Publish</button>
</form>
<ul>
${items}
</ul>
</body>
</html>
`;
}

const server = http.createServer((req, res) => {
  if (req.method === 'POST') {
    let body = '';
    req.on('data', (chunk) => { body += chunk; });
    req.on('end', () => {
      const message = formFields(body).message;
      if (message) {
        messages.push(message);
      }
      res.writeHead(200, { 'Content-Type': 'text/html' });
      res.end(page());
    });
    return;
  }
  res.writeHead(200, { 'Content-Type': 'text/html' });
  res.end(page());
});

server.listen(process.env.PORT || 3000);
